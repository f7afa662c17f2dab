use rand::Rng;

use crate::autodiff::{Activation, Graph, NodeId, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected stack; the activation follows every layer but the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    dims: Vec<usize>,
    activation: Activation,
}

impl Mlp {
    /// `dims` lists input width, hidden widths, and output width.
    pub fn new<S: Scalar, R: Rng>(
        params: &mut ParamSet<S>,
        group: usize,
        prefix: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config(prefix, format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = params.add_glorot(group, &format!("{prefix}.{i}.weight"), w[0], w[1], rng);
                let bias = params.add_param(group, &format!("{prefix}.{i}.bias"), Tensor::zeros(vec![w[1]]));
                (weight, bias)
            })
            .collect();
        Ok(Self {
            layers,
            dims: dims.to_vec(),
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("at least two widths")
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, params: &ParamSet<S>, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wn = g.param(params, w);
            let bn = g.param(params, b);
            h = g.matmul(h, wn)?;
            h = g.add_bias(h, bn)?;
            if i + 1 < self.layers.len() {
                h = g.activation(h, self.activation);
            }
        }
        Ok(h)
    }
}
