use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::pipeline::{build_model, resolve, train, DataShape, Inputs, Prepared, StageLog, Trained};
use crate::autodiff::Checkpoint;
use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::geo::FrozenEmbeddingTable;
use chrono::NaiveDate;

use crate::metrics::{export_embedding_grid, EmbeddingGrid, EmbeddingGridExport, MetricReport};
use crate::model::{FusionModel, LocationSource, Regime, Stage};
use crate::splits::{Role, SplitAssignment};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const VAL_LOG_FILE: &str = "val_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SPLIT_FILE: &str = "split.txt";

fn io(what: &str, path: &Path) -> impl FnOnce(std::io::Error) -> Error {
    let context = format!("{what} {}", path.display());
    move |e| Error::io(context, e)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io("writing", path))
}

/// `cfg` with every data path made absolute against `base`.
pub fn resolve_paths(cfg: &ExperimentConfig, base: &Path) -> ExperimentConfig {
    let mut out = cfg.clone();
    let abs = |p: &str| -> String {
        if p.is_empty() {
            String::new()
        } else {
            let path = resolve(base, p);
            fs::canonicalize(&path).unwrap_or(path).display().to_string()
        }
    };
    out.data.points = abs(&cfg.data.points);
    out.data.field = abs(&cfg.data.field);
    out.data.frozen_table = abs(&cfg.data.frozen_table);
    out.data.split_file = abs(&cfg.data.split_file);
    out
}

/// Loss log rows, each stage introduced by a `# stage=` marker line.
pub fn loss_log_csv(stages: &[StageLog]) -> String {
    let mut s = String::from("step,L,L_pred,L_pc,lr\n");
    for stage in stages {
        writeln!(s, "# stage={}", stage.stage).unwrap();
        for l in &stage.lines {
            let pc = l.pc.map_or("NA".to_string(), |v| format!("{v:e}"));
            writeln!(s, "{},{:e},{:e},{pc},{:e}", l.step, l.total, l.pred, l.lr).unwrap();
        }
    }
    s
}

pub fn val_log_csv(stages: &[StageLog]) -> String {
    let mut s = String::from("epoch,val_mse,lr\n");
    for stage in stages {
        for (epoch, v, lr) in &stage.validation {
            writeln!(s, "{epoch},{v:e},{lr:e}").unwrap();
        }
    }
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |v| format!("{v:.10e}"))
}

/// `R2,RMSE,MAE,MBE,n`, one row per report.
pub fn metrics_csv(reports: &[&MetricReport<f64>]) -> String {
    let mut s = String::from("R2,RMSE,MAE,MBE,n\n");
    for m in reports {
        writeln!(s, "{},{:.10e},{:.10e},{:.10e},{}", fmt_opt(m.r2), m.rmse, m.mae, m.mbe, m.n).unwrap();
    }
    s
}

/// Checkpoint metadata needed to rebuild the model and its normalization.
fn checkpoint_meta(trained: &Trained, shape: DataShape) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    let m = &trained.model;
    meta.insert("regime".into(), m.regime().name().into());
    meta.insert("stage".into(), format!("{:?}", m.stage()).to_lowercase());
    meta.insert("feature_dim".into(), shape.feature_dim.to_string());
    meta.insert("proxy_channels".into(), shape.proxy_channels.to_string());
    meta.insert("year_first".into(), shape.years.0.to_string());
    meta.insert("year_last".into(), shape.years.1.to_string());
    meta.insert("epochs_run".into(), trained.epochs_run.to_string());
    meta.extend(trained.prepared.norm.to_meta());
    meta
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub test: MetricReport<f64>,
    pub train: MetricReport<f64>,
    pub epochs_run: usize,
}

/// Trains `cfg` (data paths relative to `base`) and writes the run directory.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, dir: &Path) -> Result<RunSummary> {
    let cfg = resolve_paths(cfg, base);
    cfg.validate()?;
    let inputs = Inputs::load(&cfg, base)?;
    let trained = train(&cfg, &inputs)?;
    write_run(dir, &cfg, &inputs, &trained)
}

/// Writes config, checkpoint, logs, split and metrics of a trained model.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, inputs: &Inputs, trained: &Trained) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(io("creating", dir))?;
    let shape = DataShape::of(inputs);
    write_text(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    Checkpoint {
        seed: cfg.run.seed,
        config_hash: cfg.hash(),
        meta: checkpoint_meta(trained, shape),
        params: trained.model.params().clone(),
    }
    .write(&dir.join(CHECKPOINT_FILE))?;
    write_text(&dir.join(LOSS_LOG_FILE), &loss_log_csv(&trained.stages))?;
    write_text(&dir.join(VAL_LOG_FILE), &val_log_csv(&trained.stages))?;
    trained.prepared.split.write(&dir.join(SPLIT_FILE), &inputs.data)?;
    let test = trained.evaluate(&inputs.data, Role::Test)?;
    let train = trained.evaluate(&inputs.data, Role::Train)?;
    write_text(&dir.join(METRICS_FILE), &metrics_csv(&[&test]))?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        config: cfg.clone(),
        test,
        train,
        epochs_run: trained.epochs_run,
    })
}

/// A model restored from a run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: ExperimentConfig,
    pub model: FusionModel<f64>,
    pub norm: NormalizationStats,
    pub meta: BTreeMap<String, String>,
}

fn meta_parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Data(format!("checkpoint lacks a valid `{key}`")))
}

/// Rebuilds the model from `config.toml` and `checkpoint.bin` in `dir`.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let cfg_path = dir.join(CONFIG_FILE);
    let config = ExperimentConfig::load(&cfg_path)?;
    load_checkpoint(&dir.join(CHECKPOINT_FILE), config)
}

/// Rebuilds a model from a checkpoint and the config it was trained with.
pub fn load_checkpoint(path: &Path, config: ExperimentConfig) -> Result<LoadedRun> {
    let ckpt: Checkpoint<f64> = Checkpoint::read(path)?;
    if ckpt.config_hash != config.hash() {
        return Err(Error::Data(format!(
            "checkpoint {} was written by config {} but the run config hashes to {}",
            path.display(),
            ckpt.config_hash,
            config.hash()
        )));
    }
    let meta = ckpt.meta;
    let shape = DataShape {
        feature_dim: meta_parse(&meta, "feature_dim")?,
        proxy_channels: meta_parse(&meta, "proxy_channels")?,
        years: (meta_parse(&meta, "year_first")?, meta_parse(&meta, "year_last")?),
    };
    let frozen = match config.run.regime {
        Regime::FrozenLe => Some(FrozenEmbeddingTable::read(Path::new(&config.data.frozen_table))?),
        _ => None,
    };
    let mut model = build_model(&config, shape, frozen)?;
    if model.stage() == Stage::Pretrain && meta.get("stage").map(String::as_str) == Some("finetune") {
        model.finish_pretrain()?;
    }
    model.params_mut().copy_values_from(&ckpt.params)?;
    let norm = NormalizationStats::from_meta(|k| meta.get(k).cloned())?;
    Ok(LoadedRun {
        config,
        model,
        norm,
        meta,
    })
}

impl LoadedRun {
    /// Metrics on `role` of `split`, in original target units.
    pub fn evaluate(&self, inputs: &Inputs, split: &SplitAssignment, role: Role) -> Result<MetricReport<f64>> {
        let prepared = Prepared::with_stats(inputs, split.clone(), Some(self.norm.clone()))?;
        prepared.evaluate(&self.model, &split.indices(role), &inputs.data)
    }
}

/// Location embeddings of a trained encoder over `grid` at each of `times`.
pub fn embed_model(
    model: &FusionModel<f64>,
    grid: EmbeddingGrid,
    times: &[NaiveDate],
) -> Result<EmbeddingGridExport<f64>> {
    let dim = match model.location() {
        Some(LocationSource::Trained(enc)) => enc.out_dim(),
        Some(LocationSource::Frozen(_)) => {
            return Err(Error::UnsupportedRegime {
                op: "embed (the frozen table only covers its sites)",
                regime: model.regime().name().into(),
            })
        }
        None => return Err(Error::NoLocationEncoder),
    };
    export_embedding_grid(|pts| model.embed_locations(pts), dim, grid, times)
}
