use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use geopcl::error::Error;
use geopcl::experiment::{
    embed_model, load_run, run_experiment, run_sweep, ExperimentConfig, Inputs, SweepSpec, CONFIG_FILE,
    LOSS_LOG_FILE, METRICS_FILE,
};
use geopcl::metrics::EmbeddingGrid;
use geopcl::model::Regime;
use geopcl::splits::{Role, SplitAssignment};
use geopcl::synth::{generate_world, WorldConfig};
use tempfile::TempDir;

fn small_world(dir: &Path) {
    let cfg = WorldConfig {
        sites: 16,
        samples_per_site: 24,
        days: 120,
        clusters: 4,
        ..WorldConfig::default()
    };
    let world = generate_world(&cfg).unwrap();
    world.write(&dir.join("world")).unwrap();
    world.frozen_table(16).unwrap().write(&dir.join("world/frozen_table.txt")).unwrap();
}

fn small_config(regime: Regime) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.run.regime = regime;
    cfg.model.obs_hidden = vec![8];
    cfg.model.obs_dim = 8;
    cfg.model.head_hidden = vec![8];
    cfg.encoder.freqs_per_level = 4;
    cfg.encoder.hidden = vec![16];
    cfg.encoder.out_dim = 8;
    cfg.encoder.temporal_freqs = 2;
    cfg.sampler.batch_size = 32;
    cfg.sampler.rho = 2.0;
    cfg.optim.lr = 3e-3;
    cfg.optim.epochs = 4;
    cfg.optim.pretrain_epochs = 2;
    cfg
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    small_world(dir.path());
    dir
}

fn log_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join(LOSS_LOG_FILE))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn obs_only_reduces_training_loss() {
    let tmp = setup();
    let out = tmp.path().join("run");
    let summary = run_experiment(&small_config(Regime::ObsOnly), tmp.path(), &out).unwrap();
    let rows = log_rows(&out);
    let first: f64 = rows[0][2].parse().unwrap();
    let last: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!(last < first, "{first} -> {last}");
    assert!(rows.iter().all(|r| r[3] == "NA"));
    assert!(summary.test.n > 0 && summary.train.n > 0);
}

#[test]
fn pcl_log_has_proxy_loss() {
    let tmp = setup();
    let out = tmp.path().join("run");
    run_experiment(&small_config(Regime::TrainedLePcl), tmp.path(), &out).unwrap();
    let rows = log_rows(&out);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() > 0.0));
    let metrics = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "R2,RMSE,MAE,MBE,n");
}

#[test]
fn two_stage_log_has_markers() {
    let tmp = setup();
    let out = tmp.path().join("run");
    run_experiment(&small_config(Regime::ProxyPretrain), tmp.path(), &out).unwrap();
    let log = fs::read_to_string(out.join(LOSS_LOG_FILE)).unwrap();
    let markers: Vec<&str> = log.lines().filter(|l| l.starts_with("# stage=")).collect();
    assert_eq!(markers, ["# stage=pretrain", "# stage=finetune"]);
    let reloaded = load_run(&out).unwrap();
    assert_eq!(reloaded.meta["stage"], "finetune");
}

#[test]
fn identical_config_gives_identical_outputs() {
    let tmp = setup();
    let cfg = small_config(Regime::TrainedLePcl);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_experiment(&cfg, tmp.path(), &a).unwrap();
    run_experiment(&cfg, tmp.path(), &b).unwrap();
    for f in [METRICS_FILE, LOSS_LOG_FILE, CONFIG_FILE, "checkpoint.bin", "split.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // The echoed config alone reproduces the run, from any working directory.
    let echoed = ExperimentConfig::load(&a.join(CONFIG_FILE)).unwrap();
    let c = tmp.path().join("c");
    run_experiment(&echoed, Path::new("/"), &c).unwrap();
    assert_eq!(fs::read(a.join(METRICS_FILE)).unwrap(), fs::read(c.join(METRICS_FILE)).unwrap());
}

#[test]
fn zero_lambda_matches_plain_encoder() {
    let tmp = setup();
    let mut pcl = small_config(Regime::TrainedLePcl);
    pcl.loss.lambda = 0.0;
    let a = run_experiment(&pcl, tmp.path(), &tmp.path().join("a")).unwrap();
    let b = run_experiment(&small_config(Regime::TrainedLe), tmp.path(), &tmp.path().join("b")).unwrap();
    assert_eq!(a.test, b.test);
}

#[test]
fn reload_reproduces_metrics() {
    let tmp = setup();
    for regime in Regime::ALL {
        let out = tmp.path().join(regime.name());
        let summary = run_experiment(&small_config(regime), tmp.path(), &out).unwrap();
        let run = load_run(&out).unwrap();
        let inputs = Inputs::load(&run.config, tmp.path()).unwrap();
        let split = SplitAssignment::read(&out.join("split.txt"), &inputs.data).unwrap();
        let test = run.evaluate(&inputs, &split, Role::Test).unwrap();
        assert_eq!(test, summary.test, "{regime}");
    }
}

#[test]
fn edited_config_is_rejected_on_load() {
    let tmp = setup();
    let out = tmp.path().join("run");
    run_experiment(&small_config(Regime::ObsOnly), tmp.path(), &out).unwrap();
    let mut cfg = ExperimentConfig::load(&out.join(CONFIG_FILE)).unwrap();
    cfg.optim.lr *= 2.0;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml()).unwrap();
    assert!(matches!(load_run(&out), Err(Error::Data(_))));
}

#[test]
fn missing_inputs_are_data_errors() {
    let tmp = TempDir::new().unwrap();
    let err = run_experiment(&small_config(Regime::ObsOnly), tmp.path(), &tmp.path().join("r")).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn embedding_export_needs_an_encoder() {
    let tmp = setup();
    let grid = EmbeddingGrid::covering((-100.0, -80.0), (30.0, 50.0), 0.25).unwrap();
    let times = [NaiveDate::from_ymd_opt(2017, 3, 1).unwrap(), NaiveDate::from_ymd_opt(2017, 9, 1).unwrap()];

    let out = tmp.path().join("obs");
    run_experiment(&small_config(Regime::ObsOnly), tmp.path(), &out).unwrap();
    let run = load_run(&out).unwrap();
    assert!(matches!(embed_model(&run.model, grid, &times), Err(Error::NoLocationEncoder)));

    let out = tmp.path().join("pcl");
    run_experiment(&small_config(Regime::TrainedLePcl), tmp.path(), &out).unwrap();
    let run = load_run(&out).unwrap();
    let export = embed_model(&run.model, grid, &times).unwrap();
    assert_eq!((grid.nx, grid.ny), (80, 80));
    assert_eq!(export.embeddings.len(), 2 * 80 * 80 * 8);
    assert_eq!(export.timeseries_csv().lines().count(), 1 + times.len());
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = setup();
    let spec = SweepSpec::from_toml("rho = [0.0, 2.0]\nseed = [0, 1]\nmode = [\"sites-random\"]\n").unwrap();
    let mut cfg = small_config(Regime::TrainedLePcl);
    cfg.optim.epochs = 1;
    let out = tmp.path().join("sweep");
    let result = run_sweep(&cfg, &spec, tmp.path(), &out).unwrap();
    assert_eq!(result.runs.len(), 4);
    let csv = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(result.cells.iter().all(|(_, a)| a.labels.len() == 2));
}
