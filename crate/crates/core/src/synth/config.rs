use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the synthetic world. Every field has a default, so a
/// partial TOML table is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub start: NaiveDate,
    /// Length of the daily time axis.
    pub days: usize,

    /// Number of Gaussian bumps in the latent field.
    pub bumps: usize,
    /// Bump widths (standard deviation, degrees) are drawn uniformly from this range.
    pub bump_width: (f64, f64),
    /// Bump amplitudes are drawn uniformly from this range, with random sign.
    pub bump_amplitude: (f64, f64),
    /// Upper bound of the per-bump seasonal modulation depth.
    pub seasonal_depth: f64,
    /// Constant offset of the latent field.
    pub base: f64,

    pub sites: usize,
    pub samples_per_site: usize,
    /// Parent points of the site cluster process.
    pub clusters: usize,
    /// Standard deviation (degrees) of sites around their parent.
    pub cluster_spread: f64,
    /// Per-site constant offset added to the target.
    pub site_noise: f64,
    /// Per-sample noise added to the target.
    pub sample_noise: f64,

    pub informative_features: usize,
    pub noise_features: usize,
    /// Noise on each informative feature, in units of the standardized latent.
    pub feature_noise: f64,

    pub proxy_cell: f64,
    /// Gaussian blur radius (degrees) applied to the latent.
    pub proxy_blur: f64,
    /// Amplitude of the low-frequency additive bias.
    pub proxy_bias: f64,
    /// Independent noise per grid cell and day.
    pub proxy_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lon_min: -100.0,
            lon_max: -80.0,
            lat_min: 30.0,
            lat_max: 50.0,
            start: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
            days: 730,
            bumps: 25,
            bump_width: (1.0, 4.0),
            bump_amplitude: (2.0, 6.0),
            seasonal_depth: 0.6,
            base: 10.0,
            sites: 60,
            samples_per_site: 120,
            clusters: 8,
            cluster_spread: 1.5,
            site_noise: 0.3,
            sample_noise: 0.5,
            informative_features: 6,
            noise_features: 4,
            feature_noise: 1.5,
            proxy_cell: 0.5,
            proxy_blur: 1.5,
            proxy_bias: 2.0,
            proxy_noise: 4.0,
        }
    }
}

impl WorldConfig {
    /// Parses and validates a (possibly partial) TOML table.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("world", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lon_min", self.lon_min),
            ("lon_max", self.lon_max),
            ("lat_min", self.lat_min),
            ("lat_max", self.lat_max),
            ("base", self.base),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::config(*name, "must be finite"));
        }
        if !(self.lon_min < self.lon_max) {
            return Err(Error::config("lon_min", format!("{} is not below lon_max {}", self.lon_min, self.lon_max)));
        }
        if !(self.lat_min < self.lat_max) {
            return Err(Error::config("lat_min", format!("{} is not below lat_max {}", self.lat_min, self.lat_max)));
        }
        if self.lon_min < -180.0 || self.lon_max > 180.0 {
            return Err(Error::config("lon_min", "box leaves [-180, 180]"));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 {
            return Err(Error::config("lat_min", "box leaves [-90, 90]"));
        }
        let positive_counts = [
            ("days", self.days),
            ("bumps", self.bumps),
            ("sites", self.sites),
            ("samples_per_site", self.samples_per_site),
            ("clusters", self.clusters),
            ("informative_features", self.informative_features),
        ];
        if let Some((name, _)) = positive_counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(*name, "must be at least 1"));
        }
        if self.samples_per_site > self.days {
            return Err(Error::config("samples_per_site", "exceeds the number of days"));
        }
        if !(self.bump_width.0 > 0.0 && self.bump_width.0 <= self.bump_width.1) {
            return Err(Error::config("bump_width", "need 0 < low <= high"));
        }
        if !(self.bump_amplitude.0 >= 0.0 && self.bump_amplitude.0 <= self.bump_amplitude.1) {
            return Err(Error::config("bump_amplitude", "need 0 <= low <= high"));
        }
        let non_negative = [
            ("seasonal_depth", self.seasonal_depth),
            ("cluster_spread", self.cluster_spread),
            ("site_noise", self.site_noise),
            ("sample_noise", self.sample_noise),
            ("feature_noise", self.feature_noise),
            ("proxy_blur", self.proxy_blur),
            ("proxy_bias", self.proxy_bias),
            ("proxy_noise", self.proxy_noise),
        ];
        if let Some((name, _)) = non_negative.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config(*name, "must be finite and non-negative"));
        }
        if self.seasonal_depth > 1.0 {
            return Err(Error::config("seasonal_depth", "must not exceed 1"));
        }
        if !(self.proxy_cell > 0.0) {
            return Err(Error::config("proxy_cell", "must be positive"));
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Days::new(self.days as u64 - 1)
    }
}
