//! Multi-scale random Fourier features.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RffLevel<S> {
    pub sigma: S,
    /// `r × dim`, row-major.
    pub freqs: Vec<S>,
}

/// Fixed (non-trainable) frequency matrices, one per scale, ascending in σ.
#[derive(Debug, Clone, PartialEq)]
pub struct RffBank<S> {
    dim: usize,
    per_level: usize,
    levels: Vec<RffLevel<S>>,
}

impl<S: Scalar> RffBank<S> {
    /// Draws `per_level` frequencies per scale with entries ~ N(0, σ²).
    pub fn sample<R: Rng>(dim: usize, sigmas: &[f64], per_level: usize, rng: &mut R) -> Result<Self> {
        if sigmas.is_empty() || per_level == 0 || dim == 0 {
            return Err(Error::config("rff", "need at least one level, one frequency and one input dimension"));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config("rff.sigmas", format!("{sigmas:?} must be finite and non-negative")));
        }
        let mut sorted = sigmas.to_vec();
        sorted.sort_by(f64::total_cmp);
        let levels = sorted
            .into_iter()
            .map(|sigma| RffLevel {
                sigma: S::of(sigma),
                freqs: (0..per_level * dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        S::of(sigma * z)
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            dim,
            per_level,
            levels,
        })
    }

    /// Bank from explicit frequency matrices, each `per_level × dim`.
    pub fn from_levels(dim: usize, levels: Vec<RffLevel<S>>) -> Result<Self> {
        let per_level = levels.first().map_or(0, |l| l.freqs.len() / dim.max(1));
        if dim == 0 || per_level == 0 || levels.iter().any(|l| l.freqs.len() != per_level * dim) {
            return Err(Error::shape("rff", "every level needs the same per_level × dim frequencies"));
        }
        Ok(Self {
            dim,
            per_level,
            levels,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn levels(&self) -> &[RffLevel<S>] {
        &self.levels
    }

    /// `2 · r · M`.
    pub fn output_dim(&self) -> usize {
        2 * self.per_level * self.levels.len()
    }

    /// Writes `[cos(2π p·w_1..r), sin(2π p·w_1..r)]` per level into `out`.
    pub fn encode_into(&self, p: &[S], out: &mut [S]) {
        debug_assert_eq!(p.len(), self.dim);
        debug_assert_eq!(out.len(), self.output_dim());
        let two_pi = S::of(std::f64::consts::TAU);
        let r = self.per_level;
        for (level, chunk) in self.levels.iter().zip(out.chunks_mut(2 * r)) {
            let (cos, sin) = chunk.split_at_mut(r);
            for (i, w) in level.freqs.chunks(self.dim).enumerate() {
                let dot: S = w.iter().zip(p).map(|(&a, &b)| a * b).sum();
                let (s, c) = (two_pi * dot).sin_cos();
                cos[i] = c;
                sin[i] = s;
            }
        }
    }

    pub fn encode(&self, p: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.output_dim()];
        self.encode_into(p, &mut out);
        out
    }
}
