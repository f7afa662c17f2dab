use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Protocol};
use super::pipeline::{train, Inputs};
use super::run::{resolve_paths, write_run, RunSummary};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, AggregateReport, Stat};
use crate::model::Regime;
use crate::splits::SamplingMode;

/// Axes of a sweep. Empty lists keep the base config's value. Seeds and,
/// with `all_partitions`, the 8 checkerboard partitions are replicates
/// averaged within a cell; every other axis spans cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
    pub regime: Vec<Regime>,
    pub mode: Vec<SamplingMode>,
    pub seed: Vec<u64>,
    pub all_partitions: bool,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("sweep", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Cell configs, each with its replicate configs and a label.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<SweepCell> {
        fn axis<T: Clone>(values: &[T], default: T) -> Vec<T> {
            if values.is_empty() {
                vec![default]
            } else {
                values.to_vec()
            }
        }
        let mut cells = Vec::new();
        for regime in axis(&self.regime, base.run.regime) {
            for mode in axis(&self.mode, base.sampler.mode) {
                for rho in axis(&self.rho, base.sampler.rho) {
                    for lambda in axis(&self.lambda, base.loss.lambda) {
                        for delta in axis(&self.delta, base.split.delta) {
                            let mut cfg = base.clone();
                            cfg.run.regime = regime;
                            cfg.sampler.mode = mode;
                            cfg.sampler.rho = rho;
                            cfg.loss.lambda = lambda;
                            cfg.split.delta = delta;
                            if !self.delta.is_empty() || self.all_partitions {
                                cfg.split.protocol = Protocol::Checkerboard;
                            }
                            let label = format!(
                                "regime={regime},mode={},rho={rho},lambda={lambda},delta={delta}",
                                mode.name()
                            );
                            cells.push(SweepCell {
                                label,
                                replicates: self.replicates(&cfg),
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    fn replicates(&self, cell: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let mut out = Vec::new();
        for seed in if self.seed.is_empty() { vec![cell.run.seed] } else { self.seed.clone() } {
            let parts: Vec<Option<(usize, bool)>> = if self.all_partitions {
                (0..8).map(|i| Some((i % 4, i >= 4))).collect()
            } else {
                vec![None]
            };
            for part in parts {
                let mut cfg = cell.clone();
                cfg.run.seed = seed;
                let mut name = format!("seed{seed}");
                if let Some((offset, swap)) = part {
                    cfg.split.offset = offset;
                    cfg.split.swap = swap;
                    write!(name, "_off{offset}{}", if swap { "_swap" } else { "" }).unwrap();
                }
                out.push((name, cfg));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub label: String,
    pub replicates: Vec<(String, ExperimentConfig)>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<(String, AggregateReport<f64>)>,
    pub runs: Vec<RunSummary>,
}

fn stat_cols(s: Option<&Stat<f64>>) -> String {
    match s {
        Some(s) => format!("{:.10e},{}", s.mean, s.se.map_or("NA".to_string(), |v| format!("{v:.10e}"))),
        None => "NA,NA".into(),
    }
}

/// `cell,runs,R2_mean,R2_se,...`; the label is quoted because it holds commas.
pub fn aggregate_csv(cells: &[(String, AggregateReport<f64>)]) -> String {
    let mut s = String::from("cell,runs,R2_mean,R2_se,RMSE_mean,RMSE_se,MAE_mean,MAE_se,MBE_mean,MBE_se\n");
    for (label, a) in cells {
        writeln!(
            s,
            "\"{label}\",{},{},{},{},{}",
            a.labels.len(),
            stat_cols(a.r2.as_ref()),
            stat_cols(Some(&a.rmse)),
            stat_cols(Some(&a.mae)),
            stat_cols(Some(&a.mbe))
        )
        .unwrap();
    }
    s
}

/// Runs every cell of the sweep sequentially under `out`, writing each
/// run directory and `aggregate.csv`.
pub fn run_sweep(base: &ExperimentConfig, spec: &SweepSpec, data_base: &Path, out: &Path) -> Result<SweepResult> {
    let base = resolve_paths(base, data_base);
    let cells = spec.expand(&base);
    for cell in &cells {
        for (_, cfg) in &cell.replicates {
            cfg.validate()?;
        }
    }
    let mut inputs: Option<Inputs> = None;
    let mut runs = Vec::new();
    let mut aggregates = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let mut reports = Vec::new();
        for (name, cfg) in &cell.replicates {
            // Regimes differ only in whether the frozen table is needed.
            let reload = inputs.as_ref().is_none_or(|i| i.frozen.is_none() && cfg.run.regime == Regime::FrozenLe);
            if reload {
                inputs = Some(Inputs::load(cfg, data_base)?);
            }
            let inp = inputs.as_ref().expect("loaded");
            let trained = train(cfg, inp)?;
            let summary = write_run(&out.join(format!("cell{c}")).join(name), cfg, inp, &trained)?;
            reports.push((name.clone(), summary.test.clone()));
            runs.push(summary);
        }
        aggregates.push((cell.label.clone(), aggregate(&reports)?));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let path = out.join("aggregate.csv");
    fs::write(&path, aggregate_csv(&aggregates)).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(SweepResult {
        cells: aggregates,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting() {
        let base = ExperimentConfig::default();
        let spec = SweepSpec::from_toml("rho = [0.0, 1.0, 4.0, 16.0]\nseed = [0, 1, 2]\n").unwrap();
        let cells = spec.expand(&base);
        assert_eq!(cells.len(), 4);
        assert_eq!(cells.iter().map(|c| c.replicates.len()).sum::<usize>(), 12);

        let spec = SweepSpec::from_toml("delta = [2.0, 4.0, 8.0]\nall_partitions = true\n").unwrap();
        let cells = spec.expand(&base);
        assert_eq!(cells.len(), 3);
        for c in &cells {
            assert_eq!(c.replicates.len(), 8);
            assert!(c.replicates.iter().all(|(_, cfg)| cfg.split.protocol == Protocol::Checkerboard));
            let mut parts: Vec<(usize, bool)> = c.replicates.iter().map(|(_, cfg)| (cfg.split.offset, cfg.split.swap)).collect();
            parts.dedup();
            assert_eq!(parts.len(), 8);
        }

        let cells = SweepSpec::default().expand(&base);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].replicates.len(), 1);
        assert_eq!(cells[0].replicates[0].1, base);
    }

    #[test]
    fn unknown_axis_is_rejected() {
        assert!(matches!(SweepSpec::from_toml("gamma = [1]\n"), Err(Error::Config { .. })));
    }
}
