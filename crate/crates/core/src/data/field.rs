//! Gridded space–time proxy rasters.
//!
//! Stored as `field.spec` (plain `key value` lines) plus `field.bin`
//! (little-endian `f64`, time-major, then rows `y`, columns `x`, then channel).
//! Cell `(ix, iy)` covers `[lon0 + ix·cell, lon0 + (ix+1)·cell)` and its value
//! sits at the cell center.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Lower-left corner of the grid.
    pub lon0: f64,
    pub lat0: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn lon_max(&self) -> f64 {
        self.lon0 + self.cell * self.nx as f64
    }

    pub fn lat_max(&self) -> f64 {
        self.lat0 + self.cell * self.ny as f64
    }

    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.lon0 + (ix as f64 + 0.5) * self.cell,
            self.lat0 + (iy as f64 + 0.5) * self.cell,
        )
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon0 && lon <= self.lon_max() && lat >= self.lat0 && lat <= self.lat_max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    pub start: NaiveDate,
    pub step_days: u32,
    pub nt: usize,
}

impl TimeAxis {
    pub fn date(&self, k: usize) -> NaiveDate {
        self.start + chrono::Duration::days(k as i64 * i64::from(self.step_days))
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.nt.saturating_sub(1))
    }

    /// Nearest time index, if `t` lies within half a step of the axis.
    pub fn nearest(&self, t: NaiveDate) -> Option<usize> {
        let days = (t - self.start).num_days() as f64;
        let step = f64::from(self.step_days);
        let k = (days / step).round();
        (k >= 0.0 && (k as usize) < self.nt).then_some(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyField {
    pub channels: Vec<String>,
    pub grid: GridSpec,
    pub time: TimeAxis,
    /// `nt × ny × nx × m`.
    pub values: Vec<f64>,
    pub missing: f64,
}

impl ProxyField {
    pub fn new(channels: Vec<String>, grid: GridSpec, time: TimeAxis, values: Vec<f64>, missing: f64) -> Result<Self> {
        let expected = time.nt * grid.ny * grid.nx * channels.len();
        if values.len() != expected {
            return Err(Error::Data(format!(
                "raster holds {} values, spec implies {expected}",
                values.len()
            )));
        }
        if channels.is_empty() || grid.nx == 0 || grid.ny == 0 || time.nt == 0 {
            return Err(Error::Data("raster needs at least one channel, cell and time step".into()));
        }
        if !(grid.cell > 0.0) || time.step_days == 0 {
            return Err(Error::Data("cell size and time step must be positive".into()));
        }
        Ok(Self {
            channels,
            grid,
            time,
            values,
            missing,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    fn index(&self, k: usize, iy: usize, ix: usize) -> usize {
        ((k * self.grid.ny + iy) * self.grid.nx + ix) * self.channels.len()
    }

    pub fn cell(&self, k: usize, iy: usize, ix: usize) -> &[f64] {
        let i = self.index(k, iy, ix);
        &self.values[i..i + self.channels.len()]
    }

    pub fn is_missing(&self, v: f64) -> bool {
        v.is_nan() || v == self.missing
    }

    /// Bilinear in space between cell centers, nearest in time.
    ///
    /// Missing neighbors are dropped and the remaining weights renormalized.
    /// Returns `None` when any channel has no valid neighbor.
    pub fn sample_proxy(&self, lon: f64, lat: f64, t: NaiveDate) -> Result<Option<Vec<f64>>> {
        let g = &self.grid;
        if !g.contains(lon, lat) {
            return Err(Error::Extent(format!(
                "({lon}, {lat}) outside [{}, {}]x[{}, {}]",
                g.lon0,
                g.lon_max(),
                g.lat0,
                g.lat_max()
            )));
        }
        let k = self.time.nearest(t).ok_or_else(|| {
            Error::Extent(format!("{t} outside time axis {}..{}", self.time.start, self.time.end()))
        })?;
        let (ix, wx) = axis_weights((lon - g.lon0) / g.cell - 0.5, g.nx);
        let (iy, wy) = axis_weights((lat - g.lat0) / g.cell - 0.5, g.ny);
        let m = self.channels.len();
        let mut out = vec![0.0; m];
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (dy, wyv) in [(0, 1.0 - wy), (1, wy)] {
                for (dx, wxv) in [(0, 1.0 - wx), (1, wx)] {
                    let w = wxv * wyv;
                    if w == 0.0 {
                        continue;
                    }
                    let v = self.cell(k, (iy + dy).min(g.ny - 1), (ix + dx).min(g.nx - 1))[c];
                    if !self.is_missing(v) {
                        acc += w * v;
                        wsum += w;
                    }
                }
            }
            if wsum == 0.0 {
                return Ok(None);
            }
            *o = acc / wsum;
        }
        Ok(Some(out))
    }

    pub fn spec_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        writeln!(s, "channels {}", self.channels.join(",")).unwrap();
        writeln!(s, "lon0 {:e}", g.lon0).unwrap();
        writeln!(s, "lat0 {:e}", g.lat0).unwrap();
        writeln!(s, "cell {:e}", g.cell).unwrap();
        writeln!(s, "nx {}", g.nx).unwrap();
        writeln!(s, "ny {}", g.ny).unwrap();
        writeln!(s, "t0 {}", self.time.start).unwrap();
        writeln!(s, "step_days {}", self.time.step_days).unwrap();
        writeln!(s, "nt {}", self.time.nt).unwrap();
        writeln!(s, "missing {:e}", self.missing).unwrap();
        writeln!(s, "layout t,y,x,channel f64-le").unwrap();
        s
    }

    /// Writes `<spec>` and the binary next to it (`.bin` extension).
    pub fn write(&self, spec_path: &Path) -> Result<()> {
        fs::write(spec_path, self.spec_text())
            .map_err(|e| Error::io(format!("writing {}", spec_path.display()), e))?;
        let bin = bin_path(spec_path);
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes).map_err(|e| Error::io(format!("writing {}", bin.display()), e))
    }

    pub fn read(spec_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(spec_path)
            .map_err(|e| Error::io(format!("reading {}", spec_path.display()), e))?;
        let bad = |line: usize, reason: String| Error::Parse {
            path: spec_path.to_path_buf(),
            line,
            reason,
        };
        let mut kv = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| bad(i + 1, format!("expected `key value`, got `{line}`")))?;
            kv.insert(k.to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| bad(0, format!("missing key `{k}`")));
        let num = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| bad(*line, format!("`{k}`: bad number `{v}`")))
        };
        let int = |k: &str| -> Result<usize> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| bad(*line, format!("`{k}`: bad integer `{v}`")))
        };
        let channels = get("channels")?.1.split(',').map(str::to_string).collect();
        let grid = GridSpec {
            lon0: num("lon0")?,
            lat0: num("lat0")?,
            cell: num("cell")?,
            nx: int("nx")?,
            ny: int("ny")?,
        };
        let (tl, t0) = get("t0")?;
        let time = TimeAxis {
            start: NaiveDate::parse_from_str(t0, "%Y-%m-%d").map_err(|e| bad(*tl, format!("`t0`: {e}")))?,
            step_days: int("step_days")? as u32,
            nt: int("nt")?,
        };
        let missing = num("missing")?;
        let bin = bin_path(spec_path);
        let bytes = fs::read(&bin).map_err(|e| Error::io(format!("reading {}", bin.display()), e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Data(format!("{} is not a whole number of f64 values", bin.display())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(channels, grid, time, values, missing)
    }
}

pub fn bin_path(spec_path: &Path) -> PathBuf {
    spec_path.with_extension("bin")
}

/// Lower neighbor index and the weight of the upper neighbor along one axis.
fn axis_weights(pos: f64, n: usize) -> (usize, f64) {
    if n == 1 || pos <= 0.0 {
        return (0, 0.0);
    }
    let max = (n - 1) as f64;
    if pos >= max {
        return (n - 2, 1.0);
    }
    let i = pos.floor();
    (i as usize, pos - i)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 1, d).unwrap()
    }

    fn field(values: Vec<f64>, nx: usize, ny: usize, nt: usize) -> ProxyField {
        ProxyField::new(
            vec!["z".into()],
            GridSpec {
                lon0: -10.0,
                lat0: 20.0,
                cell: 0.5,
                nx,
                ny,
            },
            TimeAxis {
                start: day(1),
                step_days: 1,
                nt,
            },
            values,
            -9999.0,
        )
        .unwrap()
    }

    #[test]
    fn exact_at_cell_centers() {
        let f = field((0..24).map(f64::from).collect(), 3, 2, 4);
        for k in 0..4 {
            for iy in 0..2 {
                for ix in 0..3 {
                    let (lon, lat) = f.grid.center(ix, iy);
                    let z = f.sample_proxy(lon, lat, day(1 + k as u32)).unwrap().unwrap();
                    assert_eq!(z[0], f.cell(k, iy, ix)[0]);
                }
            }
        }
    }

    #[test]
    fn midway_between_zero_and_two() {
        let f = field(vec![0.0, 2.0, 0.0, 2.0], 2, 2, 1);
        let z = f.sample_proxy(-9.5, 20.25, day(1)).unwrap().unwrap();
        assert_eq!(z[0], 1.0);
    }

    #[test]
    fn missing_cells_are_renormalized_away() {
        let f = field(vec![-9999.0, 2.0, 4.0, -9999.0], 2, 2, 1);
        let z = f.sample_proxy(-9.5, 20.5, day(1)).unwrap().unwrap();
        assert_eq!(z[0], 3.0);
        let all = field(vec![-9999.0; 4], 2, 2, 1);
        assert_eq!(all.sample_proxy(-9.5, 20.5, day(1)).unwrap(), None);
    }

    #[test]
    fn out_of_extent() {
        let f = field(vec![1.0; 4], 2, 2, 1);
        assert!(matches!(f.sample_proxy(-10.1, 20.5, day(1)), Err(Error::Extent(_))));
        assert!(matches!(f.sample_proxy(-9.5, 20.5, day(3)), Err(Error::Extent(_))));
    }

    #[test]
    fn nearest_time_step() {
        let f = ProxyField::new(
            vec!["z".into()],
            GridSpec { lon0: 0.0, lat0: 0.0, cell: 1.0, nx: 1, ny: 1 },
            TimeAxis { start: day(1), step_days: 7, nt: 3 },
            vec![1.0, 2.0, 3.0],
            -9999.0,
        )
        .unwrap();
        assert_eq!(f.sample_proxy(0.5, 0.5, day(4)).unwrap().unwrap()[0], 1.0);
        assert_eq!(f.sample_proxy(0.5, 0.5, day(5)).unwrap().unwrap()[0], 2.0);
        assert_eq!(f.sample_proxy(0.5, 0.5, day(15)).unwrap().unwrap()[0], 3.0);
    }

    #[test]
    fn spec_and_binary_round_trip() {
        let f = field((0..24).map(|i| f64::from(i) / 7.0).collect(), 3, 2, 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("field.spec");
        f.write(&p).unwrap();
        assert!(dir.path().join("field.bin").exists());
        assert_eq!(ProxyField::read(&p).unwrap(), f);
    }

    proptest! {
        #[test]
        fn constant_field_is_constant(lon in -10.0f64..=-8.5, lat in 20.0f64..=21.0, c in -5.0f64..5.0) {
            let f = field(vec![c; 3 * 2 * 2], 3, 2, 2);
            let z = f.sample_proxy(lon, lat, day(2)).unwrap().unwrap();
            prop_assert!((z[0] - c).abs() <= 1e-12 * c.abs().max(1.0));
        }

        #[test]
        fn continuous_between_centers(lon in -9.75f64..=-8.75, lat in 20.25f64..=20.75, seed in 0u64..20) {
            let vals: Vec<f64> = (0..6).map(|i| ((i as u64 * 7919 + seed) % 13) as f64).collect();
            let f = field(vals, 3, 2, 1);
            let a = f.sample_proxy(lon, lat, day(1)).unwrap().unwrap()[0];
            let b = f.sample_proxy(lon + 1e-9, lat + 1e-9, day(1)).unwrap().unwrap()[0];
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
