//! Equal Earth forward projection on the unit sphere.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const A1: f64 = 1.340264;
const A2: f64 = -0.081106;
const A3: f64 = 0.000893;
const A4: f64 = 0.003796;

/// Projected abscissa of (180°, 0°).
pub const X_EXTENT: f64 = 2.706_629_983_696_074;
/// Projected ordinate of (·, 90°).
pub const Y_EXTENT: f64 = 1.317_362_759_157_413;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualEarthPoint<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> EqualEarthPoint<S> {
    /// Both axes divided by the global extents, landing in `[-1, 1]`.
    pub fn rescaled(self) -> [S; 2] {
        [self.x / S::of(X_EXTENT), self.y / S::of(Y_EXTENT)]
    }
}

pub fn equal_earth_project<S: Scalar>(lon: S, lat: S) -> Result<EqualEarthPoint<S>> {
    let (lo, la) = (lon.as_f64(), lat.as_f64());
    if !(-180.0..=180.0).contains(&lo) || !(-90.0..=90.0).contains(&la) {
        return Err(Error::Domain(format!("(lon {lo}, lat {la}) outside [-180,180]x[-90,90]")));
    }
    let c = |x: f64| S::of(x);
    let lambda = lon.to_radians();
    let phi = lat.to_radians();
    // parametric latitude
    let theta = (c(3f64.sqrt() / 2.0) * phi.sin()).asin();
    let t2 = theta * theta;
    let t6 = t2 * t2 * t2;
    let y = theta * (c(A1) + c(A2) * t2 + t6 * (c(A3) + c(A4) * t2));
    let denom = c(3.0) * (c(A1) + c(3.0 * A2) * t2 + t6 * (c(7.0 * A3) + c(9.0 * A4) * t2));
    let x = c(2.0 * 3f64.sqrt()) * lambda * theta.cos() / denom;
    Ok(EqualEarthPoint { x, y })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn origin_maps_to_origin() {
        let p = equal_earth_project(0.0f64, 0.0).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
    }

    #[test]
    fn reference_point() {
        // closed form evaluated independently in double precision
        let p = equal_earth_project(10.0f64, 50.0).unwrap();
        assert!((p.x - 0.124_035_027_833_305).abs() < 1e-12, "{}", p.x);
        assert!((p.y - 0.941_540_234_660_433).abs() < 1e-12, "{}", p.y);
    }

    #[test]
    fn extents() {
        let p = equal_earth_project(180.0, 0.0).unwrap();
        assert!((p.x - X_EXTENT).abs() < 1e-12);
        let q = equal_earth_project(0.0, 90.0).unwrap();
        assert!((q.y - Y_EXTENT).abs() < 1e-12);
        let r = equal_earth_project(-180.0f64, -90.0).unwrap().rescaled();
        assert!(r[0] < 0.0 && r[0] > -1.0);
        assert!((r[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_is_domain_error() {
        assert!(matches!(equal_earth_project(181.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(equal_earth_project(0.0, -90.5), Err(Error::Domain(_))));
        assert!(equal_earth_project(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn single_precision_agrees() {
        let p = equal_earth_project(10.0f32, 50.0f32).unwrap();
        assert!((p.x - 0.124_035_03).abs() < 1e-6);
        assert!((p.y - 0.941_540_2).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn odd_symmetry(lon in -180.0f64..=180.0, lat in -90.0f64..=90.0) {
            let p = equal_earth_project(lon, lat).unwrap();
            let q = equal_earth_project(-lon, -lat).unwrap();
            prop_assert!((p.x + q.x).abs() < 1e-14);
            prop_assert!((p.y + q.y).abs() < 1e-14);
        }

        #[test]
        fn rescaled_within_unit_box(lon in -180.0f64..=180.0, lat in -90.0f64..=90.0) {
            let [x, y] = equal_earth_project(lon, lat).unwrap().rescaled();
            prop_assert!(x.abs() <= 1.0 + 1e-12 && y.abs() <= 1.0 + 1e-12);
        }
    }
}
