//! Fusion of observation and location embeddings, the multi-task loss and
//! the training regimes, plus the proxy-only linear baseline.

mod fusion;
mod ols;
mod regime;

pub use fusion::{
    FusionModel, LabeledBatch, LocationSource, LocationSpec, LossConfig, LossMask, LossRecord, ModelShape, ProxyBatch,
    FUSION_HEAD, LOC_ENCODER, OBS_ENCODER, PROXY_HEAD,
};
pub use ols::{proxy_only_regression, OlsFit, ProxyOnlyReport, RIDGE_FALLBACK};
pub use regime::{Regime, Stage};
