use chrono::NaiveDate;
use rand::Rng;

use super::equal_earth::equal_earth_project;
use super::rff::RffBank;
use super::time::TemporalEncoder;
use crate::autodiff::{Activation, Graph, NodeId, ParamSet, Tensor};
use crate::error::Result;
use crate::nn::Mlp;
use crate::scalar::Scalar;

/// A point in space and time: degrees and a calendar day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTime {
    pub lon: f64,
    pub lat: f64,
    pub date: NaiveDate,
}

impl SpaceTime {
    pub fn new(lon: f64, lat: f64, date: NaiveDate) -> Self {
        Self { lon, lat, date }
    }
}

/// Hyperparameters of the trainable location–time encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderShape {
    pub sigmas: Vec<f64>,
    pub freqs_per_level: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Equal Earth + multi-scale RFF spatial branch, optional temporal branch,
/// and a trunk MLP producing the location embedding.
#[derive(Debug, Clone)]
pub struct LocationTimeEncoder<S> {
    spatial: RffBank<S>,
    temporal: TemporalEncoder<S>,
    trunk: Mlp,
}

impl<S: Scalar> LocationTimeEncoder<S> {
    /// Samples the frequency bank from `rff_rng` and initializes the trunk
    /// inside parameter group `group`.
    pub fn new<R: Rng>(
        shape: &EncoderShape,
        temporal: TemporalEncoder<S>,
        params: &mut ParamSet<S>,
        group: usize,
        rff_rng: &mut R,
        init_rng: &mut R,
    ) -> Result<Self> {
        let spatial = RffBank::sample(2, &shape.sigmas, shape.freqs_per_level, rff_rng)?;
        let mut dims = vec![spatial.output_dim() + temporal.output_dim()];
        dims.extend(&shape.hidden);
        dims.push(shape.out_dim);
        let trunk = Mlp::new(params, group, "trunk", &dims, shape.activation, init_rng)?;
        Ok(Self {
            spatial,
            temporal,
            trunk,
        })
    }

    pub fn spatial(&self) -> &RffBank<S> {
        &self.spatial
    }

    pub fn temporal(&self) -> &TemporalEncoder<S> {
        &self.temporal
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn out_dim(&self) -> usize {
        self.trunk.out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.spatial.output_dim() + self.temporal.output_dim()
    }

    /// Fixed (non-trainable) input features, one row per point.
    pub fn features(&self, points: &[SpaceTime]) -> Result<Tensor<S>> {
        let ds = self.spatial.output_dim();
        let d = self.feature_dim();
        let mut out = vec![S::zero(); points.len() * d];
        for (p, row) in points.iter().zip(out.chunks_mut(d.max(1))) {
            let proj = equal_earth_project(S::of(p.lon), S::of(p.lat))?;
            let (sp, tm) = row.split_at_mut(ds);
            self.spatial.encode_into(&proj.rescaled(), sp);
            self.temporal.encode_into(p.date, tm);
        }
        Tensor::matrix(points.len(), d, out)
    }

    /// Records the embedding of every point on `g`; output is `n × d2`.
    pub fn embed(&self, g: &mut Graph<S>, params: &ParamSet<S>, points: &[SpaceTime]) -> Result<NodeId> {
        let x = g.input(self.features(points)?);
        self.trunk.forward(g, params, x)
    }

    /// Embedding of a single point, evaluated on a throwaway tape.
    pub fn embed_location_time(&self, params: &ParamSet<S>, lon: f64, lat: f64, date: NaiveDate) -> Result<Vec<S>> {
        let mut g = Graph::new();
        let e = self.embed(&mut g, params, &[SpaceTime::new(lon, lat, date)])?;
        Ok(g.value(e).values().to_vec())
    }

    /// Embeddings of many points, row-major `n × d2`, evaluated in chunks.
    pub fn embed_many(&self, params: &ParamSet<S>, points: &[SpaceTime]) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(points.len() * self.out_dim());
        for chunk in points.chunks(4096) {
            let mut g = Graph::new();
            let e = self.embed(&mut g, params, chunk)?;
            out.extend_from_slice(g.value(e).values());
        }
        Ok(out)
    }
}
