use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::geo::{EncoderShape, TemporalKind};
use crate::model::{ModelShape, Regime};
use crate::splits::{SamplerConfig, SamplingMode};

/// Full description of one training run. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub encoder: EncoderSection,
    pub loss: LossSection,
    pub sampler: SamplerSection,
    pub split: SplitSection,
    pub optim: OptimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub regime: Regime,
    /// Master seed for split, initialization, sampling and frequency draws.
    pub seed: u64,
    /// Run directory, relative to the output root.
    pub output: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            regime: Regime::TrainedLePcl,
            seed: 0,
            output: "run".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub points: String,
    /// Proxy raster spec; the binary sits next to it.
    pub field: String,
    /// Embedding table for the frozen-encoder regime.
    pub frozen_table: String,
    /// Precomputed split file; empty means derive it from `[split]`.
    pub split_file: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            points: "world/points.tsv".into(),
            field: "world/field.spec".into(),
            frozen_table: "world/frozen_table.txt".into(),
            split_file: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub obs_hidden: Vec<usize>,
    /// `d1`.
    pub obs_dim: usize,
    /// Hidden widths shared by the prediction and proxy heads.
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            obs_hidden: vec![64],
            obs_dim: 32,
            head_hidden: vec![64, 64],
            activation: Activation::Silu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub sigmas: Vec<f64>,
    /// `r`, frequencies per level.
    pub freqs_per_level: usize,
    pub hidden: Vec<usize>,
    /// `d2`.
    pub out_dim: usize,
    pub activation: Activation,
    pub temporal: TemporalKind,
    pub temporal_freqs: usize,
    pub temporal_sigma: f64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            sigmas: vec![1.0, 4.0, 16.0, 64.0],
            freqs_per_level: 32,
            hidden: vec![128, 128],
            out_dim: 64,
            activation: Activation::Silu,
            temporal: TemporalKind::DayOfYear,
            temporal_freqs: 8,
            temporal_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda: f64,
    /// Per-channel proxy weights; empty means one for every channel.
    pub proxy_weights: Vec<f64>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            proxy_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub batch_size: usize,
    pub rho: f64,
    pub mode: SamplingMode,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            batch_size: 256,
            rho: 16.0,
            mode: SamplingMode::RandomOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Uar,
    Checkerboard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub protocol: Protocol,
    /// Share of sites sent to training (UAR).
    pub fraction: f64,
    /// Share of training sites (UAR) or samples (checkerboard) held out for validation.
    pub val_fraction: f64,
    /// Checkerboard cell side, degrees.
    pub delta: f64,
    /// Grid anchor; defaults to the lower-left corner of the proxy grid.
    pub origin: Option<(f64, f64)>,
    /// Half-cell offset variant, 0..=3.
    pub offset: usize,
    pub swap: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::Uar,
            fraction: 0.5,
            val_fraction: 0.1,
            delta: 5.0,
            origin: None,
            offset: 0,
            swap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr: f64,
    pub clip: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Proxy-only epochs of the two-stage regime.
    pub pretrain_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub min_improvement: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            clip: 1.0,
            weight_decay: 0.01,
            epochs: 100,
            pretrain_epochs: 50,
            plateau_factor: 0.5,
            plateau_patience: 5,
            early_stop_patience: 15,
            min_improvement: 1e-4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the resolved TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optim;
        let positive = [
            ("optim.lr", o.lr),
            ("optim.plateau_factor", o.plateau_factor),
            ("encoder.temporal_sigma", self.encoder.temporal_sigma),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(*name, format!("{v} must be positive")));
        }
        let non_negative = [
            ("optim.clip", o.clip),
            ("optim.weight_decay", o.weight_decay),
            ("optim.min_improvement", o.min_improvement),
            ("loss.lambda", self.loss.lambda),
        ];
        if let Some((name, v)) = non_negative.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config(*name, format!("{v} must be non-negative")));
        }
        if o.plateau_factor >= 1.0 {
            return Err(Error::config("optim.plateau_factor", "must be below 1"));
        }
        if o.epochs == 0 {
            return Err(Error::config("optim.epochs", "must be at least 1"));
        }
        if self.run.regime == Regime::ProxyPretrain && o.pretrain_epochs == 0 {
            return Err(Error::config("optim.pretrain_epochs", "the two-stage regime needs at least 1"));
        }
        self.sampler_config().validate()?;
        if self.loss.proxy_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("loss.proxy_weights", "weights must be finite and non-negative"));
        }
        let e = &self.encoder;
        if e.sigmas.is_empty() || e.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::config("encoder.sigmas", "need at least one positive scale"));
        }
        if e.freqs_per_level == 0 || e.out_dim == 0 || e.hidden.contains(&0) {
            return Err(Error::config("encoder", "widths and frequency counts must be positive"));
        }
        if e.temporal == TemporalKind::DayOfYear && e.temporal_freqs == 0 {
            return Err(Error::config("encoder.temporal_freqs", "must be positive for day-of-year"));
        }
        let m = &self.model;
        if m.obs_dim == 0 || m.obs_hidden.contains(&0) || m.head_hidden.contains(&0) {
            return Err(Error::config("model", "layer widths must be positive"));
        }
        let s = &self.split;
        match s.protocol {
            Protocol::Uar if !(s.fraction > 0.0 && s.fraction < 1.0) => {
                return Err(Error::config("split.fraction", format!("{} not in (0, 1)", s.fraction)))
            }
            Protocol::Checkerboard if !(s.delta > 0.0 && s.delta.is_finite()) => {
                return Err(Error::config("split.delta", format!("{} must be positive", s.delta)))
            }
            _ => {}
        }
        if s.offset > 3 {
            return Err(Error::config("split.offset", format!("{} not in 0..=3", s.offset)));
        }
        if !(0.0..1.0).contains(&s.val_fraction) {
            return Err(Error::config("split.val_fraction", format!("{} not in [0, 1)", s.val_fraction)));
        }
        let random_only_without_points = self.sampler.mode == SamplingMode::RandomOnly && self.sampler.rho == 0.0;
        let proxy_weighted = match self.run.regime {
            Regime::TrainedLePcl => self.loss.lambda > 0.0,
            Regime::ProxyPretrain => true,
            _ => false,
        };
        if random_only_without_points && proxy_weighted {
            return Err(Error::config(
                "sampler.rho",
                "random-only sampling with rho = 0 draws no proxy points for a weighted proxy loss",
            ));
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            batch_size: self.sampler.batch_size,
            rho: self.sampler.rho,
            mode: self.sampler.mode,
        }
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        let e = &self.encoder;
        EncoderShape {
            sigmas: e.sigmas.clone(),
            freqs_per_level: e.freqs_per_level,
            hidden: e.hidden.clone(),
            out_dim: e.out_dim,
            activation: e.activation,
        }
    }

    pub fn model_shape(&self, feature_dim: usize, proxy_channels: usize) -> ModelShape {
        ModelShape {
            feature_dim,
            proxy_channels,
            obs_hidden: self.model.obs_hidden.clone(),
            obs_dim: self.model.obs_dim,
            head_hidden: self.model.head_hidden.clone(),
            activation: self.model.activation,
        }
    }

    /// `Λ` for `m` channels.
    pub fn proxy_weights(&self, m: usize) -> Result<Vec<f64>> {
        match self.loss.proxy_weights.len() {
            0 => Ok(vec![1.0; m]),
            n if n == m => Ok(self.loss.proxy_weights.clone()),
            n => Err(Error::config("loss.proxy_weights", format!("{n} weights for {m} proxy channels"))),
        }
    }
}
