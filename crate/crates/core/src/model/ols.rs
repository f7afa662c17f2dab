use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricReport};
use crate::scalar::Scalar;

/// Ridge penalty used when the normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Ordinary least squares `y ≈ coefᵀx + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit<S> {
    pub coef: Vec<S>,
    pub intercept: S,
    /// True when the ridge fallback was needed.
    pub ridge: bool,
}

impl<S: Scalar> OlsFit<S> {
    pub fn fit(x: &[Vec<S>], y: &[S]) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::shape("ols", format!("{} rows for {} targets", x.len(), y.len())));
        }
        let p = x[0].len();
        if x.iter().any(|r| r.len() != p) {
            return Err(Error::shape("ols", "ragged design matrix"));
        }
        let n = S::of(x.len() as f64);
        let mut mx = vec![S::zero(); p];
        for row in x {
            for (m, &v) in mx.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let my = y.iter().copied().sum::<S>() / n;
        let mut a = vec![S::zero(); p * p];
        let mut b = vec![S::zero(); p];
        for (row, &t) in x.iter().zip(y) {
            for i in 0..p {
                let di = row[i] - mx[i];
                b[i] += di * (t - my);
                for j in 0..p {
                    a[i * p + j] += di * (row[j] - mx[j]);
                }
            }
        }
        let (coef, ridge) = match cholesky_solve(&a, &b, p) {
            Some(c) => (c, false),
            None => {
                for i in 0..p {
                    a[i * p + i] += S::of(RIDGE_FALLBACK);
                }
                let c = cholesky_solve(&a, &b, p)
                    .ok_or_else(|| Error::Data("normal equations singular even with ridge".into()))?;
                (c, true)
            }
        };
        let intercept = my - coef.iter().zip(&mx).map(|(&c, &m)| c * m).sum::<S>();
        Ok(Self { coef, intercept, ridge })
    }

    pub fn predict(&self, x: &[S]) -> S {
        self.intercept + self.coef.iter().zip(x).map(|(&c, &v)| c * v).sum::<S>()
    }
}

/// Solves `A c = b` for symmetric positive definite `A`; `None` if a pivot
/// is not clearly positive.
fn cholesky_solve<S: Scalar>(a: &[S], b: &[S], p: usize) -> Option<Vec<S>> {
    let scale = (0..p).map(|i| a[i * p + i]).fold(S::zero(), S::max);
    let floor = scale * S::of(1e-12);
    let mut l = vec![S::zero(); p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > floor) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = vec![S::zero(); p];
    for i in 0..p {
        let s = (0..i).fold(b[i], |s, k| s - l[i * p + k] * z[k]);
        z[i] = s / l[i * p + i];
    }
    let mut c = vec![S::zero(); p];
    for i in (0..p).rev() {
        let s = (i + 1..p).fold(z[i], |s, k| s - l[k * p + i] * c[k]);
        c[i] = s / l[i * p + i];
    }
    Some(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyOnlyReport<S> {
    pub fit: OlsFit<S>,
    pub metrics: MetricReport<S>,
}

/// Linear regression of the target on the proxy values sampled at each
/// labeled point, fit on train and scored on test.
pub fn proxy_only_regression<S: Scalar>(
    train_z: &[Vec<S>],
    train_y: &[S],
    test_z: &[Vec<S>],
    test_y: &[S],
) -> Result<ProxyOnlyReport<S>> {
    let fit = OlsFit::fit(train_z, train_y)?;
    let pred: Vec<S> = test_z.iter().map(|z| fit.predict(z)).collect();
    let metrics = compute_metrics(&pred, test_y)?;
    Ok(ProxyOnlyReport { fit, metrics })
}
