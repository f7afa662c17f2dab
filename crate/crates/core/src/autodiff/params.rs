use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of a parameter tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub group: usize,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct Parameter<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    /// Set by backward when the tensor was reachable from the loss.
    pub touched: bool,
}

/// A named unit of trainability: gradient routing and freezing act on whole groups.
#[derive(Debug, Clone)]
pub struct ParameterGroup<S> {
    pub name: String,
    pub params: Vec<Parameter<S>>,
    pub trainable: bool,
}

impl<S: Scalar> ParameterGroup<S> {
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn touched(&self) -> bool {
        self.params.iter().any(|p| p.touched)
    }

    /// Flat copy of every value, in declaration order.
    pub fn flat_values(&self) -> Vec<S> {
        self.params
            .iter()
            .flat_map(|p| p.tensor.values().iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet<S> {
    groups: Vec<ParameterGroup<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self { groups: Vec::new() }
    }

    /// Adds an empty group; names must be unique.
    pub fn add_group(&mut self, name: &str, trainable: bool) -> Result<usize> {
        if self.group_index(name).is_some() {
            return Err(Error::Invariant(format!("duplicate parameter group `{name}`")));
        }
        self.groups.push(ParameterGroup {
            name: name.to_string(),
            params: Vec::new(),
            trainable,
        });
        Ok(self.groups.len() - 1)
    }

    pub fn add_param(&mut self, group: usize, name: &str, tensor: Tensor<S>) -> ParamId {
        let g = &mut self.groups[group];
        g.params.push(Parameter {
            name: name.to_string(),
            tensor,
            touched: false,
        });
        ParamId {
            group,
            index: g.params.len() - 1,
        }
    }

    /// Glorot-uniform initialized `fan_in × fan_out` weight.
    pub fn add_glorot<R: Rng>(
        &mut self,
        group: usize,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let values = (0..fan_in * fan_out)
            .map(|_| S::of(dist.sample(rng)))
            .collect();
        let t = Tensor::new(vec![fan_in, fan_out], values).expect("consistent shape");
        self.add_param(group, name, t)
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn group(&self, idx: usize) -> &ParameterGroup<S> {
        &self.groups[idx]
    }

    pub fn group_by_name(&self, name: &str) -> Option<&ParameterGroup<S>> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn groups(&self) -> &[ParameterGroup<S>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParameterGroup<S>] {
        &mut self.groups
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<S> {
        &self.groups[id.group].params[id.index].tensor
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.groups[id.group].trainable
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let idx = self
            .group_index(name)
            .ok_or_else(|| Error::Invariant(format!("unknown parameter group `{name}`")))?;
        self.groups[idx].trainable = trainable;
        Ok(())
    }

    /// Zeroes every gradient and clears the reachability flags.
    pub fn zero_grad(&mut self) {
        for g in &mut self.groups {
            for p in &mut g.params {
                p.tensor.zero_grad();
                p.touched = false;
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[S]) {
        let p = &mut self.groups[id.group].params[id.index];
        let buf = p.tensor.grad_mut();
        for (b, g) in buf.iter_mut().zip(grad) {
            *b += *g;
        }
        p.touched = true;
    }

    pub fn numel(&self) -> usize {
        self.groups.iter().map(ParameterGroup::numel).sum()
    }

    /// Replaces the values of every tensor from another set with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamSet<S>) -> Result<()> {
        if self.groups.len() != other.groups.len() {
            return Err(Error::Invariant("parameter layouts differ".into()));
        }
        for (dst, src) in self.groups.iter_mut().zip(&other.groups) {
            if dst.name != src.name || dst.params.len() != src.params.len() {
                return Err(Error::Invariant(format!("group `{}` layout differs", dst.name)));
            }
            for (d, s) in dst.params.iter_mut().zip(&src.params) {
                if d.tensor.shape() != s.tensor.shape() {
                    return Err(Error::Invariant(format!(
                        "parameter `{}.{}` shape differs",
                        dst.name, d.name
                    )));
                }
                d.tensor.values_mut().copy_from_slice(s.tensor.values());
            }
        }
        Ok(())
    }
}
