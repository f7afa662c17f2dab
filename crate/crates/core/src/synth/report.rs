use std::fmt;

use super::world::World;
use crate::error::Result;
use crate::model::{proxy_only_regression, OlsFit};
use crate::metrics::compute_metrics;
use crate::splits::{checkerboard_split, uar_site_split, CheckerboardConfig, Offset, Role, SeedStreams};

/// Summary statistics of a generated world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldReport {
    pub sites: usize,
    pub samples: usize,
    /// Pearson correlation of proxy and target at the labeled samples.
    pub proxy_target_correlation: f64,
    /// Proxy-only linear regression, 50% site split.
    pub proxy_only_r2: f64,
    /// Proxy-only linear regression on a checkerboard with a quarter-box cell.
    pub proxy_only_checkerboard_r2: f64,
    /// Linear regression on longitude and latitude alone, same checkerboard.
    pub coordinate_only_checkerboard_r2: f64,
    /// Lag (degrees) at which the spatial autocorrelation of the latent
    /// first falls below 1/e.
    pub autocorrelation_length: f64,
}

pub fn world_report(world: &World) -> Result<WorldReport> {
    let data = &world.data;
    let z = world.proxy_at_samples()?;
    let y: Vec<f64> = data.samples.iter().map(|s| s.y).collect();
    let z0: Vec<f64> = z.iter().map(|v| v[0]).collect();

    let streams = SeedStreams::new(world.config.seed);
    let uar = uar_site_split(data, 0.5, 0.0, world.config.seed, &mut streams.stream("world.report"))?;
    let proxy_only_r2 = held_out_r2(&uar.roles, &z, &y)?;

    let cfg = world.config.clone();
    let board = CheckerboardConfig {
        delta: (cfg.lon_max - cfg.lon_min) / 4.0,
        origin: (cfg.lon_min, cfg.lat_min),
        offset: Offset::Original,
        swap: false,
    };
    let split = checkerboard_split(data, &board, 0.0, cfg.seed, &mut streams.stream("world.report"))?;
    let coords: Vec<Vec<f64>> = data.samples.iter().map(|s| vec![s.lon, s.lat]).collect();

    Ok(WorldReport {
        sites: data.sites.len(),
        samples: data.len(),
        proxy_target_correlation: pearson(&z0, &y),
        proxy_only_r2,
        proxy_only_checkerboard_r2: held_out_r2(&split.roles, &z, &y)?,
        coordinate_only_checkerboard_r2: held_out_r2(&split.roles, &coords, &y)?,
        autocorrelation_length: autocorrelation_length(world),
    })
}

/// OLS fit on every non-test row, R² on the test rows.
fn held_out_r2(roles: &[Role], x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let pick = |test: bool| {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| (roles[i] == Role::Test) == test).collect();
        (rows.iter().map(|&i| x[i].clone()).collect::<Vec<_>>(), rows.iter().map(|&i| y[i]).collect::<Vec<_>>())
    };
    let (xtr, ytr) = pick(false);
    let (xte, yte) = pick(true);
    let report = proxy_only_regression(&xtr, &ytr, &xte, &yte)?;
    Ok(report.metrics.r2.unwrap_or(f64::NAN))
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Correlation of the latent at mid-period between grid points `h` degrees
/// apart (east–west and north–south pairs pooled), scanned in 0.25° steps.
fn autocorrelation_length(world: &World) -> f64 {
    let cfg = &world.config;
    let date = cfg.start + chrono::Days::new(cfg.days as u64 / 2);
    let step = 0.25;
    let nx = ((cfg.lon_max - cfg.lon_min) / step).round() as usize;
    let ny = ((cfg.lat_max - cfg.lat_min) / step).round() as usize;
    let grid: Vec<f64> = (0..ny)
        .flat_map(|iy| {
            (0..nx).map(move |ix| {
                (cfg.lon_min + (ix as f64 + 0.5) * step, cfg.lat_min + (iy as f64 + 0.5) * step)
            })
        })
        .map(|(lon, lat)| world.oracle.latent(lon, lat, date))
        .collect();
    let max_lag = nx.min(ny) / 2;
    let threshold = (-1.0f64).exp();
    let mut prev = 1.0;
    for lag in 1..=max_lag {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for iy in 0..ny {
            for ix in 0..nx {
                if ix + lag < nx {
                    a.push(grid[iy * nx + ix]);
                    b.push(grid[iy * nx + ix + lag]);
                }
                if iy + lag < ny {
                    a.push(grid[iy * nx + ix]);
                    b.push(grid[(iy + lag) * nx + ix]);
                }
            }
        }
        let r = pearson(&a, &b);
        if r < threshold {
            let frac = (prev - threshold) / (prev - r);
            return step * ((lag - 1) as f64 + frac);
        }
        prev = r;
    }
    step * max_lag as f64
}

impl fmt::Display for WorldReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sites = {}", self.sites)?;
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "proxy_target_correlation = {:.6}", self.proxy_target_correlation)?;
        writeln!(f, "proxy_only_r2 = {:.6}", self.proxy_only_r2)?;
        writeln!(f, "proxy_only_checkerboard_r2 = {:.6}", self.proxy_only_checkerboard_r2)?;
        writeln!(f, "coordinate_only_checkerboard_r2 = {:.6}", self.coordinate_only_checkerboard_r2)?;
        writeln!(f, "autocorrelation_length_deg = {:.4}", self.autocorrelation_length)
    }
}

/// In-sample R² of the generator's own feature map fit by OLS on the features.
pub fn feature_oracle_r2(world: &World) -> Result<f64> {
    let x: Vec<Vec<f64>> = world.data.samples.iter().map(|s| s.features.clone()).collect();
    let y: Vec<f64> = world.data.samples.iter().map(|s| s.y).collect();
    let fit = OlsFit::fit(&x, &y)?;
    let pred: Vec<f64> = x.iter().map(|r| fit.predict(r)).collect();
    Ok(compute_metrics(&pred, &y)?.r2.unwrap_or(f64::NAN))
}
