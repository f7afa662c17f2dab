use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use super::pca::Pca;
use crate::error::{Error, Result};
use crate::geo::SpaceTime;
use crate::scalar::Scalar;

/// Number of leading components written to the map and time-series files.
pub const MAPPED_COMPONENTS: usize = 3;

/// Regular lon/lat grid of cell centers, `spacing` degrees apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingGrid {
    pub lon_min: f64,
    pub lat_min: f64,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl EmbeddingGrid {
    pub fn covering(lon: (f64, f64), lat: (f64, f64), spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::config("spacing", "must be positive"));
        }
        if !(lon.1 > lon.0 && lat.1 > lat.0) {
            return Err(Error::config("bounds", "empty box"));
        }
        let count = |span: f64| ((span / spacing).round() as usize).max(1);
        Ok(Self {
            lon_min: lon.0,
            lat_min: lat.0,
            spacing,
            nx: count(lon.1 - lon.0),
            ny: count(lat.1 - lat.0),
        })
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Row-major over `(iy, ix)`.
    pub fn centers(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.ny).flat_map(move |iy| {
            (0..self.nx).map(move |ix| {
                (
                    self.lon_min + (ix as f64 + 0.5) * self.spacing,
                    self.lat_min + (iy as f64 + 0.5) * self.spacing,
                )
            })
        })
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingGridExport<S> {
    pub grid: EmbeddingGrid,
    pub times: Vec<NaiveDate>,
    pub dim: usize,
    /// `times × cells` rows of length `dim`, time-major.
    pub embeddings: Vec<S>,
    pub pca: Pca<S>,
    /// Leading component scores, one row of [`MAPPED_COMPONENTS`] (or fewer) per embedding row.
    pub scores: Vec<Vec<S>>,
    pub smoothness: S,
}

/// Evaluates `embed` at every grid cell and time, fits PCA over all vectors
/// and measures the 4-neighbour roughness of the first component.
pub fn export_embedding_grid<S: Scalar>(
    mut embed: impl FnMut(&[SpaceTime]) -> Result<Vec<S>>,
    dim: usize,
    grid: EmbeddingGrid,
    times: &[NaiveDate],
) -> Result<EmbeddingGridExport<S>> {
    if times.is_empty() {
        return Err(Error::config("times", "at least one time point is required"));
    }
    let cells: Vec<(f64, f64)> = grid.centers().collect();
    let mut embeddings = Vec::with_capacity(cells.len() * times.len() * dim);
    for &date in times {
        let points: Vec<SpaceTime> = cells.iter().map(|&(lon, lat)| SpaceTime::new(lon, lat, date)).collect();
        let e = embed(&points)?;
        if e.len() != points.len() * dim {
            return Err(Error::shape(
                "export_embedding_grid",
                format!("expected {} values, encoder returned {}", points.len() * dim, e.len()),
            ));
        }
        embeddings.extend(e);
    }
    let pca = Pca::fit(&embeddings, dim)?;
    let k = MAPPED_COMPONENTS.min(dim);
    let scores: Vec<Vec<S>> = embeddings.chunks(dim).map(|row| pca.project(row, k)).collect();
    let pc1: Vec<S> = scores.iter().map(|s| s[0]).collect();
    let smoothness = roughness(&pc1, grid.nx, grid.ny);
    Ok(EmbeddingGridExport {
        grid,
        times: times.to_vec(),
        dim,
        embeddings,
        pca,
        scores,
        smoothness,
    })
}

/// Mean absolute difference over 4-neighbour cell pairs (each pair once, per
/// time slice) divided by the population standard deviation of all values.
/// Zero when the values are constant.
pub fn roughness<S: Scalar>(values: &[S], nx: usize, ny: usize) -> S {
    let n = S::of(values.len() as f64);
    let mean = values.iter().copied().sum::<S>() / n;
    let std = (values.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n).sqrt();
    if std <= S::zero() {
        return S::zero();
    }
    let mut total = S::zero();
    let mut pairs = 0usize;
    for slice in values.chunks(nx * ny) {
        for iy in 0..ny {
            for ix in 0..nx {
                let here = slice[iy * nx + ix];
                if ix + 1 < nx {
                    total += (here - slice[iy * nx + ix + 1]).abs();
                    pairs += 1;
                }
                if iy + 1 < ny {
                    total += (here - slice[(iy + 1) * nx + ix]).abs();
                    pairs += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return S::zero();
    }
    total / S::of(pairs as f64) / std
}

impl<S: Scalar> EmbeddingGridExport<S> {
    /// `(date, cell center, row index)` in storage order.
    fn rows(&self) -> Vec<(NaiveDate, (f64, f64), usize)> {
        let cells: Vec<(f64, f64)> = self.grid.centers().collect();
        let mut rows = Vec::with_capacity(cells.len() * self.times.len());
        for &date in &self.times {
            for &xy in &cells {
                rows.push((date, xy, rows.len()));
            }
        }
        rows
    }

    pub fn embeddings_csv(&self) -> String {
        let mut out = String::from("date,lon,lat");
        for j in 1..=self.dim {
            write!(out, ",e_{j}").unwrap();
        }
        out.push('\n');
        for (date, (lon, lat), row) in self.rows() {
            write!(out, "{date},{lon},{lat}").unwrap();
            for v in &self.embeddings[row * self.dim..(row + 1) * self.dim] {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Spatial score maps of the leading components, one row per cell and time.
    pub fn components_csv(&self) -> String {
        let k = self.scores.first().map_or(0, Vec::len);
        let mut out = String::from("date,lon,lat");
        for j in 1..=k {
            write!(out, ",pc{j}").unwrap();
        }
        out.push('\n');
        for (date, (lon, lat), row) in self.rows() {
            write!(out, "{date},{lon},{lat}").unwrap();
            for v in &self.scores[row] {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Per-time mean, min and max of each leading component.
    pub fn timeseries_csv(&self) -> String {
        let k = self.scores.first().map_or(0, Vec::len);
        let mut out = String::from("date");
        for j in 1..=k {
            write!(out, ",pc{j}_mean,pc{j}_min,pc{j}_max").unwrap();
        }
        out.push('\n');
        let cells = self.grid.cells();
        for (t, date) in self.times.iter().enumerate() {
            write!(out, "{date}").unwrap();
            let slice = &self.scores[t * cells..(t + 1) * cells];
            for j in 0..k {
                let col = slice.iter().map(|s| s[j]);
                let mean = col.clone().sum::<S>() / S::of(cells as f64);
                let min = col.clone().fold(S::infinity(), S::min);
                let max = col.fold(S::neg_infinity(), S::max);
                write!(out, ",{mean:e},{min:e},{max:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn basis_csv(&self) -> String {
        let mut out = String::from("component,eigenvalue,explained_ratio");
        for j in 1..=self.dim {
            write!(out, ",w_{j}").unwrap();
        }
        out.push('\n');
        for (k, (c, l)) in self.pca.components.iter().zip(&self.pca.eigenvalues).enumerate() {
            let ratio = match &self.pca.explained_ratio {
                Some(r) => format!("{:e}", r[k]),
                None => "NA".into(),
            };
            write!(out, "{},{l:e},{ratio}", k + 1).unwrap();
            for w in c {
                write!(out, ",{w:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Writes `embeddings.csv`, `pca_components.csv`, `pca_basis.csv`,
    /// `pca_timeseries.csv` and `smoothness.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let files = [
            ("embeddings.csv", self.embeddings_csv()),
            ("pca_components.csv", self.components_csv()),
            ("pca_basis.csv", self.basis_csv()),
            ("pca_timeseries.csv", self.timeseries_csv()),
            ("smoothness.txt", format!("{:e}\n", self.smoothness)),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 1, d).unwrap()
    }

    fn box_grid(spacing: f64) -> EmbeddingGrid {
        EmbeddingGrid::covering((-100.0, -80.0), (30.0, 50.0), spacing).unwrap()
    }

    #[test]
    fn grid_counting() {
        let g = box_grid(0.25);
        assert_eq!((g.nx, g.ny), (80, 80));
        let first = g.centers().next().unwrap();
        assert_eq!(first, (-99.875, 30.125));
    }

    #[test]
    fn export_shape() {
        let grid = box_grid(2.0);
        let times = [day(1), day(2)];
        let ex = export_embedding_grid(
            |pts| Ok(pts.iter().flat_map(|p| [p.lon, p.lat, p.lon * p.lat]).collect::<Vec<f64>>()),
            3,
            grid,
            &times,
        )
        .unwrap();
        assert_eq!(ex.embeddings.len(), 100 * 2 * 3);
        assert_eq!(ex.embeddings_csv().lines().count(), 1 + 200);
        assert_eq!(ex.timeseries_csv().lines().count(), 1 + 2);
    }

    #[test]
    fn constant_encoder() {
        let ex = export_embedding_grid(|pts| Ok(vec![0.5f64; pts.len() * 4]), 4, box_grid(5.0), &[day(1)]).unwrap();
        assert!(ex.pca.explained_ratio.is_none());
        assert_eq!(ex.smoothness, 0.0);
    }

    #[test]
    fn linear_encoder_is_rank_one() {
        let ex = export_embedding_grid(
            |pts| Ok(pts.iter().flat_map(|p| { let s = p.lon + p.lat; [s, -2.0 * s, 0.5 * s] }).collect::<Vec<f64>>()),
            3,
            box_grid(1.0),
            &[day(1)],
        )
        .unwrap();
        assert!(ex.pca.explained_ratio.unwrap()[0] > 1.0 - 1e-9);
    }

    #[test]
    fn roughness_orders_fields() {
        let (nx, ny) = (20, 20);
        let smooth: Vec<f64> = (0..nx * ny).map(|i| (i % nx) as f64).collect();
        let checker: Vec<f64> = (0..nx * ny).map(|i| ((i % nx + i / nx) % 2) as f64).collect();
        assert!(roughness(&smooth, nx, ny) < roughness(&checker, nx, ny));
        // Linear ramp: horizontal steps of 1, vertical steps of 0.
        let std = (((nx * nx) as f64 - 1.0) / 12.0).sqrt();
        assert!((roughness(&smooth, nx, ny) - 0.5 / std).abs() < 1e-12);
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let ex = export_embedding_grid(
            |pts| Ok(pts.iter().flat_map(|p| [p.lon.sin(), p.lat.cos()]).collect::<Vec<f64>>()),
            2,
            box_grid(4.0),
            &[day(1)],
        )
        .unwrap();
        ex.write(dir.path()).unwrap();
        for f in ["embeddings.csv", "pca_components.csv", "pca_basis.csv", "pca_timeseries.csv", "smoothness.txt"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
