use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training regimes compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Observation encoder and prediction head only.
    ObsOnly,
    /// Proxy values at the sample appended to the observation features.
    ProxyStacked,
    /// Fusion with a fixed embedding table loaded from disk.
    FrozenLe,
    /// Fusion with a trainable location encoder, no proxy loss.
    TrainedLe,
    /// Fusion with a trainable location encoder and the proxy consistency loss.
    TrainedLePcl,
    /// Location encoder pretrained on proxies alone, then frozen for fusion.
    ProxyPretrain,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::ObsOnly,
        Regime::ProxyStacked,
        Regime::FrozenLe,
        Regime::TrainedLe,
        Regime::TrainedLePcl,
        Regime::ProxyPretrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::ObsOnly => "obs-only",
            Regime::ProxyStacked => "proxy-stacked",
            Regime::FrozenLe => "frozen-le",
            Regime::TrainedLe => "trained-le",
            Regime::TrainedLePcl => "trained-le-pcl",
            Regime::ProxyPretrain => "proxy-pretrain",
        }
    }

    /// Whether the model carries a location source and a proxy head.
    pub fn has_location(self) -> bool {
        !matches!(self, Regime::ObsOnly | Regime::ProxyStacked)
    }

    /// Whether the location source is a trainable encoder.
    pub fn trains_location(self) -> bool {
        matches!(self, Regime::TrainedLe | Regime::TrainedLePcl | Regime::ProxyPretrain)
    }

    /// Whether training draws proxy batches at some stage.
    pub fn uses_proxy_loss(self) -> bool {
        matches!(self, Regime::TrainedLePcl | Regime::ProxyPretrain)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::config("regime", format!("unknown regime `{s}`")))
    }
}

/// Phase of training; only the two-stage regime leaves `Joint`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Joint,
    /// Location encoder and proxy head on the proxy loss alone.
    Pretrain,
    /// Observation encoder and prediction head with the location encoder frozen.
    Finetune,
}
