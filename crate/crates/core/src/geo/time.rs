use chrono::{Datelike, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rff::RffBank;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalKind {
    DayOfYear,
    Year,
    None,
}

impl TemporalKind {
    pub fn name(self) -> &'static str {
        match self {
            TemporalKind::DayOfYear => "day-of-year",
            TemporalKind::Year => "year",
            TemporalKind::None => "none",
        }
    }
}

/// Temporal branch of the location–time encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalEncoder<S> {
    /// Day of year on the unit circle, then a one-level RFF over `(cos θ, sin θ)`.
    DayOfYear(RffBank<S>),
    /// Calendar year rescaled linearly to `[-1, 1]` over `[first, last]`.
    Year { first: i32, last: i32 },
    None,
}

impl<S: Scalar> TemporalEncoder<S> {
    pub fn day_of_year<R: Rng>(per_level: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        Ok(Self::DayOfYear(RffBank::sample(2, &[sigma], per_level, rng)?))
    }

    pub fn year(first: i32, last: i32) -> Result<Self> {
        if last < first {
            return Err(Error::config("year span", format!("{first}..{last} is empty")));
        }
        Ok(Self::Year { first, last })
    }

    pub fn kind(&self) -> TemporalKind {
        match self {
            Self::DayOfYear(_) => TemporalKind::DayOfYear,
            Self::Year { .. } => TemporalKind::Year,
            Self::None => TemporalKind::None,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::DayOfYear(bank) => bank.output_dim(),
            Self::Year { .. } => 1,
            Self::None => 0,
        }
    }

    /// Encodes a fractional day of year (1-based, as `chrono::ordinal`).
    pub fn encode_day(&self, doy: f64, out: &mut [S]) {
        if let Self::DayOfYear(bank) = self {
            let theta = std::f64::consts::TAU * doy / DAYS_PER_YEAR;
            bank.encode_into(&[S::of(theta.cos()), S::of(theta.sin())], out);
        }
    }

    pub fn encode_into(&self, t: NaiveDate, out: &mut [S]) {
        match self {
            Self::DayOfYear(_) => self.encode_day(f64::from(t.ordinal()), out),
            Self::Year { first, last } => {
                out[0] = if last == first {
                    S::zero()
                } else {
                    S::of(2.0 * f64::from(t.year() - first) / f64::from(last - first) - 1.0)
                };
            }
            Self::None => {}
        }
    }

    pub fn encode(&self, t: NaiveDate) -> Vec<S> {
        let mut out = vec![S::zero(); self.output_dim()];
        self.encode_into(t, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn doy_encoder() -> TemporalEncoder<f64> {
        TemporalEncoder::day_of_year(8, 1.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn full_period_wraps_exactly() {
        let enc = doy_encoder();
        let (mut a, mut b) = (vec![0.0; 16], vec![0.0; 16]);
        for d in [1.0, 45.5, 200.0, 365.0] {
            enc.encode_day(d, &mut a);
            enc.encode_day(d + DAYS_PER_YEAR, &mut b);
            assert!(max_diff(&a, &b) < 1e-6);
        }
    }

    #[test]
    fn year_end_is_adjacent_to_year_start() {
        // Dec 31 of a leap year sits a quarter day short of the next Jan 1 on
        // the circle, so it is closer to DOY 1 than DOY 2 is.
        let enc = doy_encoder();
        let dec31 = enc.encode(NaiveDate::from_ymd_opt(2016, 12, 31).unwrap());
        let jan1 = enc.encode(NaiveDate::from_ymd_opt(2016, 1, 1).unwrap());
        let jan2 = enc.encode(NaiveDate::from_ymd_opt(2016, 1, 2).unwrap());
        let jul1 = enc.encode(NaiveDate::from_ymd_opt(2016, 7, 1).unwrap());
        assert!(max_diff(&dec31, &jan1) < max_diff(&jan2, &jan1));
        assert!(max_diff(&dec31, &jan1) < 0.1 * max_diff(&jul1, &jan1));
    }

    #[test]
    fn same_day_of_year_in_different_years() {
        let enc = doy_encoder();
        let a = enc.encode(NaiveDate::from_ymd_opt(2017, 3, 14).unwrap());
        let b = enc.encode(NaiveDate::from_ymd_opt(2018, 3, 14).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn none_is_empty() {
        let enc = TemporalEncoder::<f64>::None;
        assert!(enc.encode(NaiveDate::from_ymd_opt(2017, 1, 1).unwrap()).is_empty());
    }

    #[test]
    fn year_spans_unit_interval() {
        let enc = TemporalEncoder::<f64>::year(2010, 2018).unwrap();
        let at = |y| enc.encode(NaiveDate::from_ymd_opt(y, 6, 1).unwrap())[0];
        assert_eq!(at(2010), -1.0);
        assert_eq!(at(2018), 1.0);
        assert_eq!(at(2014), 0.0);
        assert!(TemporalEncoder::<f64>::year(2018, 2010).is_err());
    }
}
