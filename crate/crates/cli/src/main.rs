use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{Datelike, NaiveDate};
use clap::{ArgGroup, Args, Parser, Subcommand};
use geopcl::data::{load_labeled_table, ProxyField};
use geopcl::error::{Error, Result};
use geopcl::experiment::{
    embed_model, load_checkpoint, make_split, metrics_csv, run_experiment, run_sweep, ExperimentConfig, Inputs,
    Protocol, SplitSection, SweepSpec, CONFIG_FILE, SPLIT_FILE,
};
use geopcl::metrics::EmbeddingGrid;
use geopcl::splits::{Role, SplitAssignment};
use geopcl::synth::{generate_world, world_report, WorldConfig};

/// Relative output paths are resolved against this directory.
const OUTPUT_ROOT_ENV: &str = "GEOPCL_OUTPUT";

#[derive(Parser)]
#[command(name = "geopcl", version, about = "Location encoders with proxy consistency loss")]
struct Cli {
    /// Print the default experiment config (every key, with its default) and exit.
    #[arg(long)]
    print_default_config: bool,

    /// Root for relative output paths.
    #[arg(long, env = OUTPUT_ROOT_ENV, global = true)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world.
    Synth(SynthArgs),
    /// Write a train/validation/test split file.
    Split(SplitArgs),
    /// Train one configured run.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Train every cell of a sweep and aggregate.
    Sweep(SweepArgs),
    /// Export location embeddings on a regular grid.
    Embed(EmbedArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// World config (TOML); omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "world")]
    out: PathBuf,
    /// Width of the frozen embedding table, a multiple of 8.
    #[arg(long, default_value_t = 64)]
    frozen_dim: usize,
}

#[derive(Args)]
#[command(group(ArgGroup::new("protocol").required(true).args(["uar", "checkerboard"])))]
struct SplitArgs {
    /// Labeled points table.
    #[arg(long, default_value = "world/points.tsv")]
    data: PathBuf,
    #[arg(long)]
    uar: bool,
    #[arg(long)]
    checkerboard: bool,
    /// Share of sites sent to training (UAR).
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkerboard cell side in degrees.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=3))]
    offset: u8,
    #[arg(long)]
    swap: bool,
    /// Write all 8 checkerboard partitions into the output directory.
    #[arg(long, conflicts_with_all = ["offset", "swap"])]
    all_partitions: bool,
    /// Checkerboard anchor as `lon,lat`; defaults to the proxy grid corner.
    #[arg(long, value_parser = parse_pair)]
    origin: Option<(f64, f64)>,
    /// Proxy field used to anchor the checkerboard.
    #[arg(long, default_value = "world/field.spec")]
    field: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Output file, or directory with `--all-partitions`.
    #[arg(long, default_value = "split.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config; data paths are relative to its directory.
    #[arg(long)]
    config: PathBuf,
    /// Split file, overriding the config.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Run directory, overriding `run.output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint; the run's `config.toml` must sit next to it.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split file; defaults to the run's own.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Labeled points, overriding the run config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Where to write the metrics table.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Sweep axes (TOML lists: rho, lambda, delta, regime, mode, seed; all_partitions).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Grid spacing in degrees.
    #[arg(long, default_value_t = 0.25)]
    spacing: f64,
    /// Comma-separated dates; defaults to the 15th of every month of the proxy period.
    #[arg(long, value_delimiter = ',')]
    times: Vec<NaiveDate>,
    #[arg(long, default_value = "embedding")]
    out: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lon,lat`")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(a)?, p(b)?))
}

fn output_path(root: Option<&Path>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(|e| Error::io(format!("creating {}", d.display()), e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn synth(args: &SynthArgs, root: Option<&Path>) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => WorldConfig::load(p)?,
        None => WorldConfig::default(),
    };
    let out = output_path(root, &args.out);
    let world = generate_world(&cfg)?;
    world.write(&out)?;
    world.frozen_table(args.frozen_dim)?.write(&out.join("frozen_table.txt"))?;
    let report = world_report(&world)?.to_string();
    write_file(&out.join("report.txt"), &report)?;
    print!("{report}");
    println!("wrote {}", out.display());
    Ok(())
}

fn split(args: &SplitArgs, root: Option<&Path>) -> Result<()> {
    let data = load_labeled_table(&args.data)?;
    let mut section = SplitSection {
        fraction: args.fraction,
        val_fraction: args.val_fraction,
        origin: args.origin,
        offset: usize::from(args.offset),
        swap: args.swap,
        ..SplitSection::default()
    };
    let mut origin = (0.0, 0.0);
    if args.checkerboard {
        section.protocol = Protocol::Checkerboard;
        section.delta = args.delta.ok_or_else(|| Error::config("delta", "--checkerboard needs --delta"))?;
        if args.origin.is_none() {
            let field = ProxyField::read(&args.field)?;
            origin = (field.grid.lon0, field.grid.lat0);
        }
    }
    let out = output_path(root, &args.out);
    if args.all_partitions {
        if !args.checkerboard {
            return Err(Error::config("all-partitions", "only applies to --checkerboard"));
        }
        for i in 0..8 {
            section.offset = i % 4;
            section.swap = i >= 4;
            let s = make_split(&data, &section, args.seed, origin)?;
            let name = format!("split_off{}{}.txt", section.offset, if section.swap { "_swap" } else { "" });
            write_file(&out.join(&name), &s.to_text(&data))?;
        }
        println!("wrote 8 partitions to {}", out.display());
    } else {
        let s = make_split(&data, &section, args.seed, origin)?;
        write_file(&out, &s.to_text(&data))?;
        println!(
            "train {} val {} test {} -> {}",
            s.count(Role::Train),
            s.count(Role::Val),
            s.count(Role::Test),
            out.display()
        );
    }
    Ok(())
}

fn train(args: &TrainArgs, root: Option<&Path>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = &args.split {
        cfg.data.split_file = fs::canonicalize(s).unwrap_or_else(|_| s.clone()).display().to_string();
    }
    let out = output_path(root, args.out.as_deref().unwrap_or(Path::new(&cfg.run.output)));
    let summary = run_experiment(&cfg, &parent_dir(&args.config), &out)?;
    print!("{}", metrics_csv(&[&summary.test]));
    println!("epochs {} -> {}", summary.epochs_run, out.display());
    Ok(())
}

fn eval(args: &EvalArgs, root: Option<&Path>) -> Result<()> {
    if !args.checkpoint.is_file() {
        return Err(Error::Data(format!("no checkpoint at {}", args.checkpoint.display())));
    }
    let run_dir = parent_dir(&args.checkpoint);
    let mut cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let run = load_checkpoint(&args.checkpoint, cfg.clone())?;
    if let Some(d) = &args.data {
        cfg.data.points = d.display().to_string();
    }
    let mut inputs = Inputs::load(&cfg, Path::new("."))?;
    let split_path = args.split.clone().unwrap_or_else(|| run_dir.join(SPLIT_FILE));
    let split = SplitAssignment::read(&split_path, &inputs.data)?;
    inputs.split = Some(split.clone());
    let test = run.evaluate(&inputs, &split, Role::Test)?;
    if split.count(Role::Train) > 1 {
        let train = run.evaluate(&inputs, &split, Role::Train)?;
        if let (Some(a), Some(b)) = (train.r2, test.r2) {
            if a <= b {
                eprintln!("warning: training R² {a:.4} does not exceed test R² {b:.4}");
            }
        }
    }
    let text = metrics_csv(&[&test]);
    let out = output_path(root, &args.out);
    write_file(&out, &text)?;
    print!("{text}");
    Ok(())
}

fn sweep(args: &SweepArgs, root: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let spec = match &args.spec {
        Some(p) => SweepSpec::load(p)?,
        None => SweepSpec::default(),
    };
    let out = output_path(root, &args.out);
    let result = run_sweep(&cfg, &spec, &parent_dir(&args.config), &out)?;
    for (label, a) in &result.cells {
        match &a.r2 {
            Some(r2) => println!("{label}: R2 {:.4} ± {:.4} ({} runs)", r2.mean, r2.se.unwrap_or(f64::NAN), r2.runs),
            None => println!("{label}: R2 undefined"),
        }
    }
    println!("wrote {}", out.join("aggregate.csv").display());
    Ok(())
}

fn monthly(field: &ProxyField) -> Vec<NaiveDate> {
    let (start, end) = (field.time.start, field.time.end());
    let mut out = Vec::new();
    let mut d = NaiveDate::from_ymd_opt(start.year(), start.month(), 15).expect("valid day");
    while d <= end {
        if d >= start {
            out.push(d);
        }
        d = d.checked_add_months(chrono::Months::new(1)).expect("date in range");
    }
    out
}

fn embed(args: &EmbedArgs, root: Option<&Path>) -> Result<()> {
    let cfg = ExperimentConfig::load(&parent_dir(&args.checkpoint).join(CONFIG_FILE))?;
    let run = load_checkpoint(&args.checkpoint, cfg.clone())?;
    let field = ProxyField::read(Path::new(&cfg.data.field))?;
    let g = &field.grid;
    let grid = EmbeddingGrid::covering((g.lon0, g.lon_max()), (g.lat0, g.lat_max()), args.spacing)?;
    let times = if args.times.is_empty() { monthly(&field) } else { args.times.clone() };
    let export = embed_model(&run.model, grid, &times)?;
    let out = output_path(root, &args.out);
    export.write(&out)?;
    println!(
        "{}x{} grid, {} times, first-component roughness {:.4} -> {}",
        grid.nx,
        grid.ny,
        times.len(),
        export.smoothness,
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_default_config {
        print!("{}", ExperimentConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let root = cli.output_root.as_deref();
    let result = match &cli.command {
        Some(Command::Synth(a)) => synth(a, root),
        Some(Command::Split(a)) => split(a, root),
        Some(Command::Train(a)) => train(a, root),
        Some(Command::Eval(a)) => eval(a, root),
        Some(Command::Sweep(a)) => sweep(a, root),
        Some(Command::Embed(a)) => embed(a, root),
        None => {
            eprintln!("no command given; see --help");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
