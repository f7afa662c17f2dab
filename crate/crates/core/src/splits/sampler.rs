//! Proxy minibatches drawn independently of the labeled minibatch.

use chrono::NaiveDate;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::seeds::StreamRng;
use crate::data::{GridSpec, ProxyField};
use crate::error::{Error, Result};
use crate::geo::SpaceTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// `round(ρ·B)` points uniform over the domain.
    RandomOnly,
    /// Exactly the labeled batch's sites and dates.
    SitesOnly,
    /// Labeled sites plus `round(ρ·B)` uniform points.
    SitesRandom,
}

impl SamplingMode {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::RandomOnly => "random-only",
            SamplingMode::SitesOnly => "sites-only",
            SamplingMode::SitesRandom => "sites-random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub rho: f64,
    pub mode: SamplingMode,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho", format!("{} must be a finite value ≥ 0", self.rho)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        Ok(())
    }

    /// Uniform points per step for a labeled batch of `b` samples.
    pub fn random_count(&self, b: usize) -> usize {
        match self.mode {
            SamplingMode::SitesOnly => 0,
            _ => (self.rho * b as f64).round() as usize,
        }
    }
}

/// Cells of `grid` where proxy points may be drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    pub grid: GridSpec,
    /// Row-major `ny × nx`.
    pub valid: Vec<bool>,
}

impl DomainMask {
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        if !self.grid.contains(lon, lat) {
            return false;
        }
        let ix = (((lon - self.grid.lon0) / self.grid.cell) as usize).min(self.grid.nx - 1);
        let iy = (((lat - self.grid.lat0) / self.grid.cell) as usize).min(self.grid.ny - 1);
        self.valid[iy * self.grid.nx + ix]
    }
}

/// Space–time box (optionally masked) that uniform proxy points are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyDomain {
    pub lon: (f64, f64),
    pub lat: (f64, f64),
    pub start: NaiveDate,
    /// Number of whole days in the span (≥ 1).
    pub days: u32,
    pub mask: Option<DomainMask>,
}

impl ProxyDomain {
    pub fn new(lon: (f64, f64), lat: (f64, f64), start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if !(lon.0 < lon.1) {
            return Err(Error::config("lon bounds", format!("{} ≥ {}", lon.0, lon.1)));
        }
        if !(lat.0 < lat.1) {
            return Err(Error::config("lat bounds", format!("{} ≥ {}", lat.0, lat.1)));
        }
        let days = (end - start).num_days() + 1;
        if days < 1 {
            return Err(Error::config("time span", format!("{start}..{end} is empty")));
        }
        Ok(Self {
            lon,
            lat,
            start,
            days: days as u32,
            mask: None,
        })
    }

    /// The raster's full extent and time axis.
    pub fn of_field(field: &ProxyField) -> Result<Self> {
        let g = &field.grid;
        Self::new((g.lon0, g.lon_max()), (g.lat0, g.lat_max()), field.time.start, field.time.end())
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon.0
            && lon <= self.lon.1
            && lat >= self.lat.0
            && lat <= self.lat.1
            && self.mask.as_ref().is_none_or(|m| m.contains(lon, lat))
    }

    pub fn sample_point(&self, rng: &mut StreamRng) -> Result<SpaceTime> {
        for _ in 0..10_000 {
            let lon = rng.random_range(self.lon.0..self.lon.1);
            let lat = rng.random_range(self.lat.0..self.lat.1);
            if self.contains(lon, lat) {
                let day = rng.random_range(0..self.days);
                return Ok(SpaceTime::new(lon, lat, self.start + chrono::Duration::days(i64::from(day))));
            }
        }
        Err(Error::Data("domain mask rejects every candidate point".into()))
    }
}

/// Coordinates of one proxy batch.
pub fn sample_proxy_batch(domain: &ProxyDomain, cfg: &SamplerConfig, labeled: &[SpaceTime], rng: &mut StreamRng) -> Result<Vec<SpaceTime>> {
    cfg.validate()?;
    let n_random = cfg.random_count(labeled.len());
    let mut out = Vec::with_capacity(n_random + labeled.len());
    if matches!(cfg.mode, SamplingMode::SitesOnly | SamplingMode::SitesRandom) {
        out.extend_from_slice(labeled);
    }
    for _ in 0..n_random {
        out.push(domain.sample_point(rng)?);
    }
    Ok(out)
}

/// Maximum re-draw rounds when sampled proxy values are missing.
pub const MAX_REDRAW_ROUNDS: usize = 10;

/// Draws a proxy batch and its raster values.
///
/// Points whose value is missing are dropped; random points are re-drawn (up
/// to [`MAX_REDRAW_ROUNDS`] rounds) to keep the batch size.
pub fn draw_proxy_targets(
    field: &ProxyField,
    domain: &ProxyDomain,
    cfg: &SamplerConfig,
    labeled: &[SpaceTime],
    rng: &mut StreamRng,
) -> Result<(Vec<SpaceTime>, Vec<Vec<f64>>)> {
    let coords = sample_proxy_batch(domain, cfg, labeled, rng)?;
    let target = coords.len();
    let mut points = Vec::with_capacity(target);
    let mut values = Vec::with_capacity(target);
    for p in coords {
        if let Some(z) = field.sample_proxy(p.lon, p.lat, p.date)? {
            points.push(p);
            values.push(z);
        }
    }
    let mut rounds = 0;
    while points.len() < target && cfg.mode != SamplingMode::SitesOnly && rounds < MAX_REDRAW_ROUNDS {
        for _ in points.len()..target {
            let p = domain.sample_point(rng)?;
            if let Some(z) = field.sample_proxy(p.lon, p.lat, p.date)? {
                points.push(p);
                values.push(z);
            }
        }
        rounds += 1;
    }
    Ok((points, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeAxis;
    use crate::splits::make_seed_streams;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 1, d).unwrap()
    }

    fn domain() -> ProxyDomain {
        ProxyDomain::new((-100.0, -80.0), (30.0, 50.0), day(1), day(31)).unwrap()
    }

    fn labeled(n: usize) -> Vec<SpaceTime> {
        (0..n).map(|i| SpaceTime::new(-90.0 + i as f64 * 0.01, 40.0, day(1 + (i % 28) as u32))).collect()
    }

    fn rng() -> StreamRng {
        make_seed_streams(5).stream("sampler")
    }

    #[test]
    fn rho_zero_random_only_is_empty() {
        let cfg = SamplerConfig { batch_size: 4, rho: 0.0, mode: SamplingMode::RandomOnly };
        assert!(sample_proxy_batch(&domain(), &cfg, &labeled(4), &mut rng()).unwrap().is_empty());
    }

    #[test]
    fn default_ratio_gives_4096_points() {
        let cfg = SamplerConfig { batch_size: 256, rho: 16.0, mode: SamplingMode::RandomOnly };
        let pts = sample_proxy_batch(&domain(), &cfg, &labeled(256), &mut rng()).unwrap();
        assert_eq!(pts.len(), 4096);
        let d = domain();
        assert!(pts.iter().all(|p| d.contains(p.lon, p.lat) && p.date >= day(1) && p.date <= day(31)));
    }

    #[test]
    fn sites_only_reuses_labeled_coordinates() {
        let cfg = SamplerConfig { batch_size: 8, rho: 16.0, mode: SamplingMode::SitesOnly };
        let l = labeled(8);
        assert_eq!(sample_proxy_batch(&domain(), &cfg, &l, &mut rng()).unwrap(), l);
        let both = SamplerConfig { mode: SamplingMode::SitesRandom, ..cfg };
        let pts = sample_proxy_batch(&domain(), &both, &l, &mut rng()).unwrap();
        assert_eq!(pts.len(), 8 + 128);
        assert_eq!(&pts[..8], l.as_slice());
    }

    #[test]
    fn negative_rho_is_config_error() {
        let cfg = SamplerConfig { batch_size: 8, rho: -1.0, mode: SamplingMode::RandomOnly };
        assert!(matches!(
            sample_proxy_batch(&domain(), &cfg, &labeled(2), &mut rng()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn masked_domain_is_respected() {
        let grid = GridSpec { lon0: -100.0, lat0: 30.0, cell: 10.0, nx: 2, ny: 2 };
        let mut d = domain();
        d.mask = Some(DomainMask { grid, valid: vec![false, true, false, false] });
        let cfg = SamplerConfig { batch_size: 10, rho: 10.0, mode: SamplingMode::RandomOnly };
        let pts = sample_proxy_batch(&d, &cfg, &labeled(10), &mut rng()).unwrap();
        assert!(pts.iter().all(|p| p.lon >= -90.0 && p.lat <= 40.0));
    }

    #[test]
    fn missing_values_are_redrawn() {
        // western column missing everywhere
        let grid = GridSpec { lon0: -100.0, lat0: 30.0, cell: 10.0, nx: 2, ny: 2 };
        let time = TimeAxis { start: day(1), step_days: 1, nt: 31 };
        let mut values = Vec::new();
        for _ in 0..31 {
            values.extend_from_slice(&[-9999.0, 1.0, -9999.0, 1.0]);
        }
        let field = ProxyField::new(vec!["z".into()], grid, time, values, -9999.0).unwrap();
        let d = ProxyDomain::of_field(&field).unwrap();
        let cfg = SamplerConfig { batch_size: 4, rho: 8.0, mode: SamplingMode::RandomOnly };
        let (pts, z) = draw_proxy_targets(&field, &d, &cfg, &labeled(4), &mut rng()).unwrap();
        assert_eq!(pts.len(), 32);
        assert!(z.iter().all(|v| v[0] == 1.0));
    }
}
