use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::WorldConfig;
use crate::data::{write_points, Dataset, GridSpec, LabeledSample, ProxyField, TimeAxis};
use crate::error::{Error, Result};
use crate::autodiff::Tensor;
use crate::geo::{equal_earth_project, FrozenEmbeddingTable, RffBank, DAYS_PER_YEAR};
use crate::splits::SeedStreams;

/// Margin (degrees) by which bump centers may fall outside the box.
const CENTER_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub lon: f64,
    pub lat: f64,
    pub width: f64,
    pub amplitude: f64,
    pub depth: f64,
    pub phase: f64,
}

impl Bump {
    fn seasonal(&self, doy: f64) -> f64 {
        1.0 + self.depth * (TAU * doy / DAYS_PER_YEAR + self.phase).sin()
    }

    /// Spatial profile after convolving with an isotropic Gaussian of std `blur`.
    fn profile(&self, lon: f64, lat: f64, blur: f64) -> f64 {
        let w2 = self.width * self.width;
        let v = w2 + blur * blur;
        let d2 = (lon - self.lon).powi(2) + (lat - self.lat).powi(2);
        w2 / v * (-d2 / (2.0 * v)).exp()
    }
}

/// Low-frequency additive bias of the proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasField {
    pub amplitude: f64,
    pub freq: (f64, f64),
    pub phase: (f64, f64),
    origin: (f64, f64),
    span: (f64, f64),
}

impl BiasField {
    pub fn at(&self, lon: f64, lat: f64) -> f64 {
        let u = (lon - self.origin.0) / self.span.0;
        let v = (lat - self.origin.1) / self.span.1;
        self.amplitude * (TAU * self.freq.0 * u + self.phase.0).sin() * (TAU * self.freq.1 * v + self.phase.1).cos()
    }
}

/// Closed-form latent field shared by the generator and by evaluation code.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthOracle {
    pub base: f64,
    pub bumps: Vec<Bump>,
    pub bias: BiasField,
    /// Mean and standard deviation of the latent over the labeled samples,
    /// used to standardize it before building features.
    pub latent_mean: f64,
    pub latent_std: f64,
}

impl TruthOracle {
    pub fn latent(&self, lon: f64, lat: f64, date: NaiveDate) -> f64 {
        self.blurred(lon, lat, date, 0.0)
    }

    /// The latent convolved with a Gaussian of std `blur` degrees.
    pub fn blurred(&self, lon: f64, lat: f64, date: NaiveDate, blur: f64) -> f64 {
        let doy = f64::from(date.ordinal());
        self.base
            + self
                .bumps
                .iter()
                .map(|b| b.amplitude * b.seasonal(doy) * b.profile(lon, lat, blur))
                .sum::<f64>()
    }

    /// Noise-free proxy: blurred latent plus bias.
    pub fn proxy_mean(&self, lon: f64, lat: f64, date: NaiveDate, blur: f64) -> f64 {
        self.blurred(lon, lat, date, blur) + self.bias.at(lon, lat)
    }
}

/// Observation features as functions of the standardized latent `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// `(α, β, γ)` per informative feature: `α·u + β·u² + γ·tanh(u)`.
    pub coefs: Vec<(f64, f64, f64)>,
    pub noise_features: usize,
}

impl FeatureMap {
    pub fn informative(&self, u: f64) -> impl Iterator<Item = f64> + '_ {
        self.coefs.iter().map(move |&(a, b, c)| a * u + b * u * u + c * u.tanh())
    }

    pub fn names(&self) -> Vec<String> {
        (1..=self.coefs.len() + self.noise_features).map(|j| format!("f_{j}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub data: Dataset,
    pub field: ProxyField,
    pub oracle: TruthOracle,
    pub features: FeatureMap,
    /// Latent value at each labeled sample, in sample order.
    pub latent: Vec<f64>,
}

/// Builds the world from `cfg` alone; the same config always yields the same world.
pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let streams = SeedStreams::new(cfg.seed);
    let span = (cfg.lon_max - cfg.lon_min, cfg.lat_max - cfg.lat_min);

    let mut rng = streams.stream("world.latent");
    let bumps: Vec<Bump> = (0..cfg.bumps)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Bump {
                lon: rng.random_range(cfg.lon_min - CENTER_MARGIN..cfg.lon_max + CENTER_MARGIN),
                lat: rng.random_range(cfg.lat_min - CENTER_MARGIN..cfg.lat_max + CENTER_MARGIN),
                width: uniform(&mut rng, cfg.bump_width),
                amplitude: sign * uniform(&mut rng, cfg.bump_amplitude),
                depth: rng.random_range(0.0..=cfg.seasonal_depth),
                phase: rng.random_range(0.0..TAU),
            }
        })
        .collect();
    let bias = BiasField {
        amplitude: cfg.proxy_bias,
        freq: (rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)),
        phase: (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)),
        origin: (cfg.lon_min, cfg.lat_min),
        span,
    };
    let mut oracle = TruthOracle {
        base: cfg.base,
        bumps,
        bias,
        latent_mean: 0.0,
        latent_std: 1.0,
    };

    let sites = place_sites(cfg, &mut streams.stream("world.sites"));
    let mut rng = streams.stream("world.days");
    let mut points = Vec::with_capacity(cfg.sites * cfg.samples_per_site);
    for (s, &(lon, lat)) in sites.iter().enumerate() {
        let mut days = sample(&mut rng, cfg.days, cfg.samples_per_site).into_vec();
        days.sort_unstable();
        for d in days {
            points.push((s, lon, lat, cfg.start + Days::new(d as u64)));
        }
    }
    let latent: Vec<f64> = points.iter().map(|&(_, lon, lat, t)| oracle.latent(lon, lat, t)).collect();
    let n = latent.len() as f64;
    oracle.latent_mean = latent.iter().sum::<f64>() / n;
    let var = latent.iter().map(|v| (v - oracle.latent_mean).powi(2)).sum::<f64>() / n;
    oracle.latent_std = if var > 0.0 { var.sqrt() } else { 1.0 };

    let mut rng = streams.stream("world.features");
    let features = FeatureMap {
        coefs: (0..cfg.informative_features)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let c: f64 = StandardNormal.sample(&mut rng);
                (a, 0.3 * b, 0.5 * c)
            })
            .collect(),
        noise_features: cfg.noise_features,
    };

    let mut rng = streams.stream(SeedStreams::NOISE);
    let site_offsets: Vec<f64> = (0..sites.len()).map(|_| gauss(&mut rng, cfg.site_noise)).collect();
    let mut samples = Vec::with_capacity(points.len());
    for (i, (&(s, lon, lat, date), &l)) in points.iter().zip(&latent).enumerate() {
        let u = (l - oracle.latent_mean) / oracle.latent_std;
        let mut f: Vec<f64> = features.informative(u).collect();
        for v in &mut f {
            *v += gauss(&mut rng, cfg.feature_noise);
        }
        f.extend((0..cfg.noise_features).map(|_| gauss(&mut rng, 1.0)));
        samples.push(LabeledSample {
            id: format!("{i}"),
            site: format!("site_{s}"),
            lon,
            lat,
            date,
            features: f,
            y: l + site_offsets[s] + gauss(&mut rng, cfg.sample_noise),
        });
    }
    let data = Dataset::new(features.names(), samples)?;
    let field = rasterize_proxy(cfg, &oracle, &mut streams.stream("world.proxy"))?;
    Ok(World {
        config: cfg.clone(),
        data,
        field,
        oracle,
        features,
        latent,
    })
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn gauss<R: Rng>(rng: &mut R, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// Poisson cluster process: parents uniform in the box, sites scattered
/// around a random parent, redrawn until they land inside.
fn place_sites<R: Rng>(cfg: &WorldConfig, rng: &mut R) -> Vec<(f64, f64)> {
    let parents: Vec<(f64, f64)> = (0..cfg.clusters)
        .map(|_| (rng.random_range(cfg.lon_min..cfg.lon_max), rng.random_range(cfg.lat_min..cfg.lat_max)))
        .collect();
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(cfg.sites);
    while sites.len() < cfg.sites {
        let (plon, plat) = parents[rng.random_range(0..parents.len())];
        let p = (plon + gauss(rng, cfg.cluster_spread), plat + gauss(rng, cfg.cluster_spread));
        let inside = p.0 > cfg.lon_min && p.0 < cfg.lon_max && p.1 > cfg.lat_min && p.1 < cfg.lat_max;
        if inside && !sites.contains(&p) {
            sites.push(p);
        }
    }
    sites
}

fn rasterize_proxy<R: Rng>(cfg: &WorldConfig, oracle: &TruthOracle, rng: &mut R) -> Result<ProxyField> {
    let nx = ((cfg.lon_max - cfg.lon_min) / cfg.proxy_cell).round().max(1.0) as usize;
    let ny = ((cfg.lat_max - cfg.lat_min) / cfg.proxy_cell).round().max(1.0) as usize;
    let grid = GridSpec {
        lon0: cfg.lon_min,
        lat0: cfg.lat_min,
        cell: cfg.proxy_cell,
        nx,
        ny,
    };
    let time = TimeAxis {
        start: cfg.start,
        step_days: 1,
        nt: cfg.days,
    };
    let centers: Vec<(f64, f64)> = (0..ny).flat_map(|iy| (0..nx).map(move |ix| grid.center(ix, iy))).collect();
    // Spatial parts do not depend on the day; only the seasonal factor does.
    let profiles: Vec<Vec<f64>> = oracle
        .bumps
        .iter()
        .map(|b| centers.iter().map(|&(lon, lat)| b.amplitude * b.profile(lon, lat, cfg.proxy_blur)).collect())
        .collect();
    let offsets: Vec<f64> = centers.iter().map(|&(lon, lat)| oracle.base + oracle.bias.at(lon, lat)).collect();
    let mut values = Vec::with_capacity(cfg.days * centers.len());
    for k in 0..cfg.days {
        let doy = f64::from(time.date(k).ordinal());
        let factors: Vec<f64> = oracle.bumps.iter().map(|b| b.seasonal(doy)).collect();
        for (c, &offset) in offsets.iter().enumerate() {
            let signal: f64 = profiles.iter().zip(&factors).map(|(p, f)| p[c] * f).sum();
            values.push(offset + signal + gauss(rng, cfg.proxy_noise));
        }
    }
    ProxyField::new(vec!["z".into()], grid, time, values, f64::NAN)
}

impl World {
    /// Writes `points.tsv`, `field.spec`/`field.bin` and `world.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        write_points(&dir.join("points.tsv"), &self.data)?;
        self.field.write(&dir.join("field.spec"))?;
        let echo = toml::to_string(&self.config).map_err(|e| Error::config("world", e.to_string()))?;
        let path = dir.join("world.toml");
        fs::write(&path, echo).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Proxy values at every labeled sample, in sample order.
    pub fn proxy_at_samples(&self) -> Result<Vec<Vec<f64>>> {
        self.data
            .samples
            .iter()
            .map(|s| {
                self.field
                    .sample_proxy(s.lon, s.lat, s.date)?
                    .ok_or_else(|| Error::Data(format!("proxy missing at sample `{}`", s.id)))
            })
            .collect()
    }
}

/// Scales of the generic positional embedding shipped as the frozen table.
pub const FROZEN_SIGMAS: [f64; 4] = [1.0, 4.0, 16.0, 64.0];

impl World {
    /// A fixed embedding of every site location, standing in for a
    /// pretrained location encoder that knows nothing about the target:
    /// multi-scale random Fourier features of the projected coordinates.
    /// `dim` must be a multiple of 8.
    pub fn frozen_table(&self, dim: usize) -> Result<FrozenEmbeddingTable<f64>> {
        let levels = FROZEN_SIGMAS.len();
        if dim == 0 || !dim.is_multiple_of(2 * levels) {
            return Err(Error::config("frozen_dim", format!("{dim} is not a positive multiple of {}", 2 * levels)));
        }
        let mut rng = SeedStreams::new(self.config.seed).stream("world.frozen");
        let bank = RffBank::<f64>::sample(2, &FROZEN_SIGMAS, dim / (2 * levels), &mut rng)?;
        let coords: Vec<(f64, f64)> = self.data.sites.sites().iter().map(|s| (s.lon, s.lat)).collect();
        let mut values = Vec::with_capacity(coords.len() * dim);
        for &(lon, lat) in &coords {
            values.extend(bank.encode(&equal_earth_project(lon, lat)?.rescaled()));
        }
        FrozenEmbeddingTable::new(coords.clone(), Tensor::matrix(coords.len(), dim, values)?, 1e-9)
    }
}
