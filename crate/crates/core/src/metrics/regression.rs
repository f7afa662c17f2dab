use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regression metrics in target units.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<S> {
    /// Absent when the targets are constant.
    pub r2: Option<S>,
    pub rmse: S,
    pub mae: S,
    /// Mean of `ŷ − y`.
    pub mbe: S,
    pub n: usize,
}

impl<S: Scalar> MetricReport<S> {
    pub fn r2_note(&self) -> Option<&'static str> {
        self.r2.is_none().then_some("targets are constant; R² undefined")
    }
}

pub fn compute_metrics<S: Scalar>(pred: &[S], y: &[S]) -> Result<MetricReport<S>> {
    if pred.len() != y.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} predictions for {} targets", pred.len(), y.len()),
        ));
    }
    if y.len() < 2 {
        return Err(Error::Data(format!("metrics need at least 2 points, got {}", y.len())));
    }
    if let Some(i) = pred.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value at position {}", i % y.len())));
    }
    let n = S::of(y.len() as f64);
    let mean_y = y.iter().copied().sum::<S>() / n;
    let mut sse = S::zero();
    let mut sst = S::zero();
    let mut sae = S::zero();
    let mut bias = S::zero();
    for (&p, &t) in pred.iter().zip(y) {
        let e = p - t;
        sse += e * e;
        sae += e.abs();
        bias += e;
        sst += (t - mean_y) * (t - mean_y);
    }
    Ok(MetricReport {
        r2: (sst > S::zero()).then(|| S::one() - sse / sst),
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        mbe: bias / n,
        n: y.len(),
    })
}

/// Mean and standard error of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat<S> {
    pub mean: S,
    /// Sample standard deviation over √runs; absent for a single run.
    pub se: Option<S>,
    pub runs: usize,
}

impl<S: Scalar> Stat<S> {
    pub fn of(values: &[S]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = S::of(values.len() as f64);
        let mean = values.iter().copied().sum::<S>() / n;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / (n - S::one());
            (var / n).sqrt()
        });
        Some(Self {
            mean,
            se,
            runs: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport<S> {
    pub labels: Vec<String>,
    /// Over runs where R² is defined.
    pub r2: Option<Stat<S>>,
    pub rmse: Stat<S>,
    pub mae: Stat<S>,
    pub mbe: Stat<S>,
}

pub fn aggregate<S: Scalar>(reports: &[(String, MetricReport<S>)]) -> Result<AggregateReport<S>> {
    if reports.is_empty() {
        return Err(Error::Data("nothing to aggregate".into()));
    }
    let col = |f: fn(&MetricReport<S>) -> S| reports.iter().map(|(_, r)| f(r)).collect::<Vec<_>>();
    let r2: Vec<S> = reports.iter().filter_map(|(_, r)| r.r2).collect();
    Ok(AggregateReport {
        labels: reports.iter().map(|(l, _)| l.clone()).collect(),
        r2: Stat::of(&r2),
        rmse: Stat::of(&col(|r| r.rmse)).expect("non-empty"),
        mae: Stat::of(&col(|r| r.mae)).expect("non-empty"),
        mbe: Stat::of(&col(|r| r.mbe)).expect("non-empty"),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [1.0, 2.0, 4.0];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!(m.r2, Some(1.0));
        assert_eq!((m.rmse, m.mae, m.mbe), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let y = [1.0, 2.0, 6.0];
        let m = compute_metrics(&[3.0; 3], &y).unwrap();
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn hand_case() {
        let m = compute_metrics(&[1.0; 4], &[0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.r2, Some(0.0));
        assert_eq!((m.rmse, m.mae, m.mbe), (1.0, 1.0, 0.0));
    }

    #[test]
    fn constant_target_has_no_r2() {
        let m = compute_metrics(&[1.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(m.r2.is_none());
        assert!(m.r2_note().is_some());
    }

    #[test]
    fn input_errors() {
        assert!(compute_metrics(&[1.0], &[1.0]).is_err());
        assert!(compute_metrics(&[1.0, 2.0], &[1.0]).is_err());
        assert!(compute_metrics(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    fn report(r2: f64) -> MetricReport<f64> {
        MetricReport { r2: Some(r2), rmse: 1.0, mae: 0.5, mbe: 0.1, n: 10 }
    }

    #[test]
    fn aggregate_cases() {
        let same = aggregate(&[("a".into(), report(0.3)), ("b".into(), report(0.3))]).unwrap();
        assert_eq!(same.r2.unwrap().se, Some(0.0));
        let two = aggregate(&[("a".into(), report(0.3)), ("b".into(), report(0.5))]).unwrap();
        let r2 = two.r2.unwrap();
        assert!((r2.mean - 0.4).abs() < 1e-15);
        assert!((r2.se.unwrap() - 0.1).abs() < 1e-15);
        let one = aggregate(&[("a".into(), report(0.3))]).unwrap();
        assert_eq!(one.r2.unwrap().se, None);
        assert!(aggregate::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn ordering_invariants(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..40)) {
            let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &y).unwrap();
            prop_assert!(m.rmse + 1e-12 >= m.mae && m.mae >= 0.0);
            prop_assert!(m.rmse * m.rmse + 1e-9 >= m.mbe * m.mbe);
        }

        #[test]
        fn shift_behaviour(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40), c in -10.0f64..10.0) {
            let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(y.iter().any(|&v| (v - y[0]).abs() > 1e-3));
            let m = compute_metrics(&p, &y).unwrap();
            let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let both = compute_metrics(&ps, &ys).unwrap();
            prop_assert!((both.r2.unwrap() - m.r2.unwrap()).abs() < 1e-9);
            let shifted = compute_metrics(&ps, &y).unwrap();
            prop_assert!((shifted.mbe - (m.mbe + c)).abs() < 1e-9);
        }
    }
}
