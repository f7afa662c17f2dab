use crate::error::{Error, Result};
use crate::scalar::Scalar;

const TOLERANCE: f64 = 1e-10;
const MAX_ITERS: usize = 20_000;

/// Principal components of a row-major `n × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<S> {
    pub mean: Vec<S>,
    /// Row `k` is the `k`-th unit-norm principal axis.
    pub components: Vec<Vec<S>>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<S>,
    /// Absent when the data has zero variance.
    pub explained_ratio: Option<Vec<S>>,
}

impl<S: Scalar> Pca<S> {
    /// Power iteration with deflation on the sample covariance; every new axis
    /// is re-orthogonalized against the ones already found.
    pub fn fit(data: &[S], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) || data.len() < 2 * dim {
            return Err(Error::shape("pca", format!("{} values for dimension {dim}", data.len())));
        }
        let n = data.len() / dim;
        let mut mean = vec![S::zero(); dim];
        for row in data.chunks(dim) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= S::of(n as f64));
        let mut cov = vec![S::zero(); dim * dim];
        let mut centered = vec![S::zero(); dim];
        for row in data.chunks(dim) {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = v - m;
            }
            for i in 0..dim {
                for j in i..dim {
                    cov[i * dim + j] += centered[i] * centered[j];
                }
            }
        }
        let denom = S::of((n - 1) as f64);
        for i in 0..dim {
            for j in i..dim {
                let v = cov[i * dim + j] / denom;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        let trace: S = (0..dim).map(|i| cov[i * dim + i]).sum();

        let mut components: Vec<Vec<S>> = Vec::with_capacity(dim);
        let mut eigenvalues = Vec::with_capacity(dim);
        for k in 0..dim {
            let (v, lambda) = leading_eigenpair(&cov, dim, &components, k);
            for i in 0..dim {
                for j in 0..dim {
                    cov[i * dim + j] -= lambda * v[i] * v[j];
                }
            }
            components.push(v);
            eigenvalues.push(lambda.max(S::zero()));
        }
        // Deflation can leave near-ties slightly out of order.
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap());
        let components: Vec<Vec<S>> = order.iter().map(|&i| components[i].clone()).collect();
        let eigenvalues: Vec<S> = order.iter().map(|&i| eigenvalues[i]).collect();
        let explained_ratio = (trace > S::zero()).then(|| {
            let total = eigenvalues.iter().copied().sum::<S>().max(trace);
            eigenvalues.iter().map(|&l| l / total).collect()
        });
        Ok(Self {
            mean,
            components,
            eigenvalues,
            explained_ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scores of one row on the first `k` components.
    pub fn project(&self, row: &[S], k: usize) -> Vec<S> {
        self.components[..k]
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((&w, &x), &m)| w * (x - m)).sum())
            .collect()
    }

    /// Inverse of [`Pca::project`] for a full-length score vector, without the mean.
    pub fn reconstruct_centered(&self, scores: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.dim()];
        for (c, &s) in self.components.iter().zip(scores) {
            for (o, &w) in out.iter_mut().zip(c) {
                *o += s * w;
            }
        }
        out
    }
}

fn orthogonalize<S: Scalar>(v: &mut [S], basis: &[Vec<S>]) {
    for b in basis {
        let dot: S = v.iter().zip(b).map(|(&x, &y)| x * y).sum();
        for (x, &y) in v.iter_mut().zip(b) {
            *x -= dot * y;
        }
    }
}

fn normalize<S: Scalar>(v: &mut [S]) -> S {
    let norm = v.iter().map(|&x| x * x).sum::<S>().sqrt();
    if norm > S::zero() {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn leading_eigenpair<S: Scalar>(cov: &[S], dim: usize, found: &[Vec<S>], k: usize) -> (Vec<S>, S) {
    let scale = cov.iter().fold(S::zero(), |m, &c| m.max(c.abs()));
    let mut v: Vec<S> = (0..dim)
        .map(|i| S::of(1.0 + ((i * 7919 + k * 104_729) % 97) as f64 / 97.0))
        .collect();
    orthogonalize(&mut v, found);
    if normalize(&mut v) <= S::zero() {
        v = fallback_axis(dim, found);
    }
    let tol = S::of(TOLERANCE);
    let mut next = vec![S::zero(); dim];
    for _ in 0..MAX_ITERS {
        for i in 0..dim {
            next[i] = (0..dim).map(|j| cov[i * dim + j] * v[j]).sum();
        }
        orthogonalize(&mut next, found);
        let norm = normalize(&mut next);
        if norm <= scale * S::epsilon() {
            // Remaining spectrum is numerically zero; any orthogonal axis will do.
            return (canonical_sign(v), S::zero());
        }
        if next.iter().zip(&v).map(|(&a, &b)| b * a).sum::<S>() < S::zero() {
            next.iter_mut().for_each(|x| *x = -*x);
        }
        let delta = next.iter().zip(&v).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt();
        std::mem::swap(&mut v, &mut next);
        if delta < tol {
            break;
        }
    }
    let lambda = (0..dim)
        .map(|i| v[i] * (0..dim).map(|j| cov[i * dim + j] * v[j]).sum::<S>())
        .sum::<S>();
    (canonical_sign(v), lambda)
}

fn fallback_axis<S: Scalar>(dim: usize, found: &[Vec<S>]) -> Vec<S> {
    for i in 0..dim {
        let mut e = vec![S::zero(); dim];
        e[i] = S::one();
        orthogonalize(&mut e, found);
        orthogonalize(&mut e, found);
        if normalize(&mut e) > S::of(1e-6) {
            return e;
        }
    }
    unreachable!("fewer than `dim` orthonormal axes found")
}

/// Flip so the largest-magnitude entry is positive.
fn canonical_sign<S: Scalar>(mut v: Vec<S>) -> Vec<S> {
    let lead = v.iter().copied().fold(S::zero(), |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < S::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn rank_one_data() {
        let data: Vec<f64> = (0..50)
            .flat_map(|i| {
                let t = i as f64 * 0.3 - 2.0;
                [t, 2.0 * t, -t, 0.5 * t]
            })
            .collect();
        let pca = Pca::fit(&data, 4).unwrap();
        let ratio = pca.explained_ratio.unwrap();
        assert!((ratio[0] - 1.0).abs() < 1e-10);
        let expected = [1.0, 2.0, -1.0, 0.5].map(|x: f64| x / 6.25f64.sqrt());
        for (a, b) in pca.components[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_data_has_no_ratio() {
        let pca = Pca::fit(&[1.0; 12], 3).unwrap();
        assert!(pca.explained_ratio.is_none());
        assert!(pca.eigenvalues.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn diagonal_covariance() {
        // Independent axes with variances 9, 4, 1.
        let mut data = Vec::new();
        for s in [-1.0, 1.0] {
            data.extend([3.0 * s, 0.0, 0.0]);
            data.extend([0.0, 2.0 * s, 0.0]);
            data.extend([0.0, 0.0, s]);
        }
        let pca = Pca::fit(&data, 3).unwrap();
        let lam: Vec<f64> = pca.eigenvalues.iter().map(|l| l * 5.0).collect();
        for (a, b) in lam.iter().zip([18.0, 8.0, 2.0]) {
            assert!((a - b).abs() < 1e-9, "{lam:?}");
        }
    }

    proptest! {
        #[test]
        fn full_projection_round_trips(data in proptest::collection::vec(-5.0f64..5.0, 5 * 20)) {
            let pca = Pca::fit(&data, 5).unwrap();
            for row in data.chunks(5) {
                let back = pca.reconstruct_centered(&pca.project(row, 5));
                for ((b, x), m) in back.iter().zip(row).zip(&pca.mean) {
                    prop_assert!((b - (x - m)).abs() < 1e-8);
                }
            }
            if let Some(r) = &pca.explained_ratio {
                prop_assert!(r.iter().all(|&x| x >= 0.0));
                prop_assert!(r.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(r.iter().sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }
}
