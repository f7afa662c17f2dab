use std::path::{Path, PathBuf};

use chrono::Datelike;
use rand::seq::SliceRandom;

use super::config::{ExperimentConfig, Protocol, SplitSection};
use crate::autodiff::{plateau_and_early_stop, AdamWConfig, OptimizerState, ParamSet, Tensor};
use crate::data::{load_labeled_table, Dataset, NormalizationStats, ProxyField};
use crate::error::{Error, Result};
use crate::geo::{FrozenEmbeddingTable, SpaceTime, TemporalEncoder, TemporalKind};
use crate::metrics::{compute_metrics, MetricReport};
use crate::model::{FusionModel, LabeledBatch, LocationSpec, LossConfig, LossMask, ProxyBatch, Regime, Stage};
use crate::splits::{
    checkerboard_split, draw_proxy_targets, uar_site_split, CheckerboardConfig, Offset, ProxyDomain, Role,
    SeedStreams, SplitAssignment, StreamRng,
};

/// Stream for the spatial and temporal frequency banks.
pub const RFF_STREAM: &str = "rff";
/// Stream for minibatch order, kept apart from proxy draws so that
/// supplying proxy batches never changes which labels a step sees.
pub const ORDER_STREAM: &str = "order";

/// Everything a run reads from disk.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub data: Dataset,
    pub field: ProxyField,
    pub frozen: Option<FrozenEmbeddingTable<f64>>,
    /// A precomputed split; otherwise derived from the config.
    pub split: Option<SplitAssignment>,
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Inputs {
    /// Loads the files named in `[data]`, relative to `base`.
    pub fn load(cfg: &ExperimentConfig, base: &Path) -> Result<Self> {
        let data = load_labeled_table(&resolve(base, &cfg.data.points))?;
        let field = ProxyField::read(&resolve(base, &cfg.data.field))?;
        let frozen = match cfg.run.regime {
            Regime::FrozenLe => Some(FrozenEmbeddingTable::read(&resolve(base, &cfg.data.frozen_table))?),
            _ => None,
        };
        let split = match cfg.data.split_file.as_str() {
            "" => None,
            f => Some(SplitAssignment::read(&resolve(base, f), &data)?),
        };
        Ok(Self {
            data,
            field,
            frozen,
            split,
        })
    }
}

/// The split named by the config, drawn from the `split` stream.
pub fn resolve_split(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<SplitAssignment> {
    match &inputs.split {
        Some(s) => Ok(s.clone()),
        None => make_split(
            &inputs.data,
            &cfg.split,
            cfg.run.seed,
            (inputs.field.grid.lon0, inputs.field.grid.lat0),
        ),
    }
}

/// Builds a split from `section`; `default_origin` anchors the checkerboard
/// when the section leaves it unset.
pub fn make_split(
    data: &Dataset,
    section: &SplitSection,
    seed: u64,
    default_origin: (f64, f64),
) -> Result<SplitAssignment> {
    let mut rng = SeedStreams::new(seed).stream(SeedStreams::SPLIT);
    let s = section;
    match s.protocol {
        Protocol::Uar => uar_site_split(data, s.fraction, s.val_fraction, seed, &mut rng),
        Protocol::Checkerboard => {
            let board = CheckerboardConfig {
                delta: s.delta,
                origin: s.origin.unwrap_or(default_origin),
                offset: Offset::from_index(s.offset).ok_or_else(|| Error::config("split.offset", "not in 0..=3"))?,
                swap: s.swap,
            };
            checkerboard_split(data, &board, s.val_fraction, seed, &mut rng)
        }
    }
}

/// Architecture facts derived from the data, needed to rebuild a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataShape {
    pub feature_dim: usize,
    pub proxy_channels: usize,
    pub years: (i32, i32),
}

impl DataShape {
    pub fn of(inputs: &Inputs) -> Self {
        let years = inputs.data.samples.iter().map(|s| s.date.year());
        let first = years.clone().min().unwrap_or(inputs.field.time.start.year());
        let last = years.max().unwrap_or(first);
        Self {
            feature_dim: inputs.data.feature_dim(),
            proxy_channels: inputs.field.channels(),
            years: (first, last),
        }
    }
}

/// Builds the model for `cfg`; frequency banks come from the `rff` stream
/// and weights from the `init` stream.
pub fn build_model(
    cfg: &ExperimentConfig,
    shape: DataShape,
    frozen: Option<FrozenEmbeddingTable<f64>>,
) -> Result<FusionModel<f64>> {
    let streams = SeedStreams::new(cfg.run.seed);
    let mut rff = streams.stream(RFF_STREAM);
    let mut init = streams.stream(SeedStreams::INIT);
    let regime = cfg.run.regime;
    let location = if regime.trains_location() {
        let e = &cfg.encoder;
        let temporal = match e.temporal {
            TemporalKind::DayOfYear => TemporalEncoder::day_of_year(e.temporal_freqs, e.temporal_sigma, &mut rff)?,
            TemporalKind::Year => TemporalEncoder::year(shape.years.0, shape.years.1)?,
            TemporalKind::None => TemporalEncoder::None,
        };
        Some(LocationSpec::Trained {
            shape: cfg.encoder_shape(),
            temporal,
        })
    } else if regime == Regime::FrozenLe {
        Some(LocationSpec::Frozen(frozen.ok_or_else(|| {
            Error::config("data.frozen_table", "the frozen-encoder regime needs an embedding table")
        })?))
    } else {
        None
    };
    let loss = LossConfig::new(cfg.loss.lambda, cfg.proxy_weights(shape.proxy_channels)?)?;
    FusionModel::new(
        regime,
        cfg.model_shape(shape.feature_dim, shape.proxy_channels),
        loss,
        location,
        &mut rff,
        &mut init,
    )
}

/// Normalized views of the whole dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub norm: NormalizationStats,
    pub split: SplitAssignment,
    features: Vec<f64>,
    proxies: Vec<f64>,
    targets: Vec<f64>,
    points: Vec<SpaceTime>,
    k: usize,
    m: usize,
}

/// Proxy values at every labeled sample.
pub fn proxies_at_samples(inputs: &Inputs) -> Result<Vec<Vec<f64>>> {
    inputs
        .data
        .samples
        .iter()
        .map(|s| {
            inputs
                .field
                .sample_proxy(s.lon, s.lat, s.date)?
                .ok_or_else(|| Error::Data(format!("proxy value missing at sample `{}`", s.id)))
        })
        .collect()
}

impl Prepared {
    /// Fits normalization on the training rows only and applies it everywhere.
    pub fn new(inputs: &Inputs, split: SplitAssignment) -> Result<Self> {
        Self::with_stats(inputs, split, None)
    }

    /// As [`Prepared::new`], but with statistics restored from a checkpoint.
    pub fn with_stats(inputs: &Inputs, split: SplitAssignment, norm: Option<NormalizationStats>) -> Result<Self> {
        let data = &inputs.data;
        if split.roles.len() != data.len() {
            return Err(Error::Data(format!("split has {} rows for {} samples", split.roles.len(), data.len())));
        }
        let z = proxies_at_samples(inputs)?;
        let norm = match norm {
            Some(n) => n,
            None => {
                let train = split.indices(Role::Train);
                if train.is_empty() {
                    return Err(Error::Data("training split is empty".into()));
                }
                let rows: Vec<&[f64]> = train.iter().map(|&i| data.samples[i].features.as_slice()).collect();
                let y: Vec<f64> = train.iter().map(|&i| data.samples[i].y).collect();
                let zt: Vec<Vec<f64>> = train.iter().map(|&i| z[i].clone()).collect();
                NormalizationStats::fit(&data.feature_names, &rows, &y, &inputs.field.channels, &zt)?
            }
        };
        let (k, m) = (data.feature_dim(), inputs.field.channels());
        let mut features = Vec::with_capacity(data.len() * k);
        let mut proxies = Vec::with_capacity(data.len() * m);
        for (s, zi) in data.samples.iter().zip(&z) {
            norm.apply_features(&s.features, &mut features);
            norm.apply_proxies(zi, &mut proxies);
        }
        Ok(Self {
            targets: data.samples.iter().map(|s| norm.target.apply(s.y)).collect(),
            points: data.samples.iter().map(|s| s.space_time()).collect(),
            norm,
            split,
            features,
            proxies,
            k,
            m,
        })
    }

    pub fn batch(&self, idx: &[usize]) -> LabeledBatch<f64> {
        let n = idx.len();
        let mut x = Vec::with_capacity(n * self.k);
        let mut z = Vec::with_capacity(n * self.m);
        for &i in idx {
            x.extend_from_slice(&self.features[i * self.k..(i + 1) * self.k]);
            z.extend_from_slice(&self.proxies[i * self.m..(i + 1) * self.m]);
        }
        LabeledBatch {
            features: Tensor::matrix(n, self.k, x).expect("consistent widths"),
            proxies: Some(Tensor::matrix(n, self.m, z).expect("consistent widths")),
            points: idx.iter().map(|&i| self.points[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// Predictions in normalized units, evaluated in chunks.
    pub fn predict(&self, model: &FusionModel<f64>, idx: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(2048) {
            out.extend(model.predict(&self.batch(chunk))?);
        }
        Ok(out)
    }

    /// Mean squared error in normalized units.
    pub fn mse(&self, model: &FusionModel<f64>, idx: &[usize]) -> Result<f64> {
        let pred = self.predict(model, idx)?;
        Ok(pred.iter().zip(idx).map(|(p, &i)| (p - self.targets[i]).powi(2)).sum::<f64>() / idx.len() as f64)
    }

    /// Metrics in original target units.
    pub fn evaluate(&self, model: &FusionModel<f64>, idx: &[usize], data: &Dataset) -> Result<MetricReport<f64>> {
        let pred: Vec<f64> = self.predict(model, idx)?.into_iter().map(|p| self.norm.target.invert(p)).collect();
        let y: Vec<f64> = idx.iter().map(|&i| data.samples[i].y).collect();
        compute_metrics(&pred, &y)
    }

    fn proxy_batch(
        &self,
        field: &ProxyField,
        domain: &ProxyDomain,
        cfg: &ExperimentConfig,
        labeled: &[SpaceTime],
        rng: &mut StreamRng,
    ) -> Result<ProxyBatch<f64>> {
        let (points, raw) = draw_proxy_targets(field, domain, &cfg.sampler_config(), labeled, rng)?;
        let mut z = Vec::with_capacity(points.len() * self.m);
        for r in &raw {
            self.norm.apply_proxies(r, &mut z);
        }
        Ok(ProxyBatch {
            targets: Tensor::matrix(points.len(), self.m, z)?,
            points,
        })
    }
}

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLine {
    pub step: u64,
    pub total: f64,
    pub pred: f64,
    pub pc: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageLog {
    pub stage: &'static str,
    pub lines: Vec<LogLine>,
    /// `(epoch, validation MSE, lr)` after each epoch.
    pub validation: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: FusionModel<f64>,
    pub prepared: Prepared,
    pub stages: Vec<StageLog>,
    pub epochs_run: usize,
    pub best_val: f64,
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Joint => "joint",
        Stage::Pretrain => "pretrain",
        Stage::Finetune => "finetune",
    }
}

fn adamw(cfg: &ExperimentConfig) -> OptimizerState<f64> {
    let o = &cfg.optim;
    OptimizerState::new(AdamWConfig {
        lr: o.lr,
        weight_decay: o.weight_decay,
        clip_norm: o.clip,
        ..AdamWConfig::default()
    })
    .with_plateau(o.plateau_factor, o.plateau_patience, o.min_improvement)
    .with_early_stop(o.early_stop_patience)
}

/// Trains the configured regime end to end and restores the parameters
/// with the best validation error.
pub fn train(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<Trained> {
    cfg.validate()?;
    let split = resolve_split(cfg, inputs)?;
    let prepared = Prepared::new(inputs, split)?;
    let mut model = build_model(cfg, DataShape::of(inputs), inputs.frozen.clone())?;
    let streams = SeedStreams::new(cfg.run.seed);
    let mut order_rng = streams.stream(ORDER_STREAM);
    let mut sampler_rng = streams.stream(SeedStreams::SAMPLER);
    let domain = ProxyDomain::of_field(&inputs.field)?;
    let train_idx = prepared.split.indices(Role::Train);
    let val_idx = prepared.split.indices(Role::Val);
    let b = cfg.sampler.batch_size;
    let steps_per_epoch = train_idx.len().div_ceil(b);
    let mut stages = Vec::new();

    if model.stage() == Stage::Pretrain {
        let mut opt = adamw(cfg);
        let mut lines = Vec::new();
        let mut order = train_idx.clone();
        let mut cursor = order.len();
        for _ in 0..cfg.optim.pretrain_epochs {
            for _ in 0..steps_per_epoch {
                if cursor >= order.len() {
                    order.shuffle(&mut order_rng);
                    cursor = 0;
                }
                let end = (cursor + b).min(order.len());
                let points: Vec<SpaceTime> = order[cursor..end].iter().map(|&i| prepared.points[i]).collect();
                cursor = end;
                let batch = prepared.proxy_batch(&inputs.field, &domain, cfg, &points, &mut sampler_rng)?;
                let rec = model.train_step(&mut opt, &model.empty_labeled(), &batch, LossMask { pred: false, proxy: true })?;
                lines.push(LogLine {
                    step: opt.step_count(),
                    total: rec.total,
                    pred: rec.pred,
                    pc: rec.pc,
                    lr: opt.lr(),
                });
            }
        }
        model.finish_pretrain()?;
        stages.push(StageLog {
            stage: "pretrain",
            lines,
            validation: Vec::new(),
        });
    }

    let mut opt = adamw(cfg);
    let stage = stage_name(model.stage());
    let wants_proxy = model.regime() == Regime::TrainedLePcl;
    let mut lines = Vec::new();
    let mut validation = Vec::new();
    let mut best: Option<(f64, ParamSet<f64>)> = None;
    let mut epochs_run = 0;
    for epoch in 0..cfg.optim.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut order_rng);
        let mut pred_sum = 0.0;
        for chunk in order.chunks(b) {
            let batch = prepared.batch(chunk);
            let proxy = if wants_proxy {
                prepared.proxy_batch(&inputs.field, &domain, cfg, &batch.points, &mut sampler_rng)?
            } else {
                ProxyBatch::empty(inputs.field.channels())
            };
            let rec = model.train_step(&mut opt, &batch, &proxy, LossMask::default())?;
            pred_sum += rec.pred;
            lines.push(LogLine {
                step: opt.step_count(),
                total: rec.total,
                pred: rec.pred,
                pc: rec.pc,
                lr: opt.lr(),
            });
        }
        epochs_run = epoch + 1;
        let val = if val_idx.is_empty() {
            pred_sum / steps_per_epoch as f64
        } else {
            prepared.mse(&model, &val_idx)?
        };
        if !val.is_finite() {
            return Err(Error::Invariant(format!("validation error is {val} after epoch {epochs_run}")));
        }
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, model.params().clone()));
        }
        let (lr, stop) = plateau_and_early_stop(&mut opt, val);
        validation.push((epochs_run, val, lr));
        if stop {
            break;
        }
    }
    let (best_val, params) = best.expect("at least one epoch");
    model.params_mut().copy_values_from(&params)?;
    stages.push(StageLog {
        stage,
        lines,
        validation,
    });
    Ok(Trained {
        model,
        prepared,
        stages,
        epochs_run,
        best_val,
    })
}

impl Trained {
    pub fn evaluate(&self, data: &Dataset, role: Role) -> Result<MetricReport<f64>> {
        self.prepared.evaluate(&self.model, &self.prepared.split.indices(role), data)
    }
}
