//! Command-line interface: `train`, `sweep`, `fit`, `maximize`, `heatmap`.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 1 anything else (I/O).

pub mod config;
pub mod heatmap;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::envs::Task;
use crate::error::{Error, Result};
use crate::fit::{self, FitCoefficients, FitSummary, FitTarget, Region};
use crate::sweep::{self, GridOutput, RunKey};
use config::{Overrides, Preset};

#[derive(Debug, Parser)]
#[command(
    name = "noisy-rlvr",
    version,
    about = "GRPO under a noisy verifier, and scaling-surface fits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one (p, x, G, seed) configuration.
    Train(TrainArgs),
    /// Run the full (p, x, G, seed) grid; resumes from an existing records.csv.
    Sweep(SweepArgs),
    /// Fit the scaling surface to a records table.
    Fit(FitArgs),
    /// Maximize a fitted surface over the noise square.
    Maximize(MaximizeArgs),
    /// Emit per-G accuracy matrices, SVG heatmaps, and scaling-curve data.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML or JSON), or a run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// False-negative rate.
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// False-positive rate.
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Rollouts per prompt.
    #[arg(long = "group-size", short = 'G')]
    pub group_size: Option<usize>,
    /// Seed index of this run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Global seed mixed into every run stream.
    #[arg(long)]
    pub global_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum concurrent runs.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Records CSV produced by `sweep`.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_enum, default_value_t = FitTarget::Final)]
    pub target: FitTarget,
    /// Rollout count at which the surface is maximized (default: largest present).
    #[arg(long = "group-size", short = 'G')]
    pub group_size: Option<usize>,
    /// Only use rows whose task column equals this tag.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaximizeArgs {
    /// Fit report JSON written by `fit`.
    #[arg(long, conflicts_with = "coeffs")]
    pub report: Option<PathBuf>,
    /// Coefficients a,b,c,d,e,f,g (x², xp, p², x, p, log2 G, intercept).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coeffs: Option<Vec<f64>>,
    #[arg(long = "group-size", short = 'G', default_value_t = 8)]
    pub group_size: usize,
    /// Region p_lo,p_hi,x_lo,x_hi.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub region: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_enum, default_value_t = FitTarget::Final)]
    pub target: FitTarget,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Runs a parsed command and maps the outcome to an exit code.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::Parse { .. }
        | Error::TooFewObservations { .. }
        | Error::RankDeficient { .. } => 2,
        Error::Numerical { .. } => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a).map(|dir| eprintln!("run directory: {}", dir.display())),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a).map(|_| ()),
        Command::Maximize(a) => cmd_maximize(&a),
        Command::Heatmap(a) => cmd_heatmap(&a).map(|_| ()),
    }
}

fn load_config(common: &ConfigArgs, global_seed: Option<u64>) -> Result<config::Loaded> {
    let overrides = Overrides {
        preset: common.preset,
        output_dir: common.out.clone(),
        global_seed,
    };
    config::load(common.config.as_deref(), &overrides, std::env::vars())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Trains one configuration and writes `trace.csv`, `metrics.csv`,
/// `params.txt` and `manifest.json` into the run directory.
pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let loaded = load_config(&args.common, args.global_seed)?;
    let cfg = loaded.config;
    let from_manifest = loaded.manifest_run;
    let p = args.p.or(from_manifest.map(|m| m.p)).unwrap_or(0.0);
    let x = args.x.or(from_manifest.map(|m| m.x)).unwrap_or(0.0);
    let group_size = args
        .group_size
        .or(from_manifest.map(|m| m.group_size))
        .unwrap_or(cfg.train.grpo.group_size);
    let seed = args.seed.or(from_manifest.map(|m| m.seed)).unwrap_or(0);
    crate::noise::NoiseSpec::new(p, x)?;
    if group_size < 2 {
        return Err(Error::config("group_size", "must be at least 2"));
    }

    let task = Task::new(cfg.task.clone())?;
    let key = RunKey {
        p,
        x,
        group_size,
        seed,
    };
    let output = sweep::run_config(&task, key, &cfg.train, cfg.global_seed)?;

    let dir = GridOutput {
        dir: cfg.output_dir.clone(),
    }
    .run_dir(task.kind().as_str(), &key);
    std::fs::create_dir_all(&dir)?;
    output.trace.write_csv(&dir.join("trace.csv"))?;
    sweep::write_metrics_csv(&output.metrics, &dir.join("metrics.csv"))?;
    let mut params_file = std::io::BufWriter::new(std::fs::File::create(dir.join("params.txt"))?);
    output.params.write_text(&mut params_file)?;
    drop(params_file);
    let manifest = json!({
        "manifest_version": 1,
        "command": "train",
        "created_unix": unix_now(),
        "run": { "p": p, "x": x, "group_size": group_size, "seed": seed },
        "config": cfg.to_json(),
        "record": output.record,
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    eprintln!(
        "{}: final {:?} best {:?} after {} steps",
        key.dir_name(task.kind().as_str()),
        output.record.final_accuracy,
        output.record.best_accuracy,
        output.record.wall_steps
    );
    if let Some(f) = output.failure {
        return Err(Error::numerical(key.dir_name(task.kind().as_str()), f));
    }
    Ok(dir)
}

/// Runs the configured grid into `<out>/records.csv`.
pub fn cmd_sweep(args: &SweepArgs) -> Result<PathBuf> {
    let cfg = load_config(&args.common, args.seed)?.config;
    let sweep_cfg = cfg.sweep_config();
    let out = GridOutput {
        dir: cfg.output_dir.clone(),
    };
    std::fs::create_dir_all(&out.dir)?;
    let manifest = json!({
        "manifest_version": 1,
        "command": "sweep",
        "created_unix": unix_now(),
        "config": cfg.to_json(),
    });
    std::fs::write(
        out.dir.join("sweep_manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let total = sweep_cfg.keys().len();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let progress = |r: &sweep::EvalRecord| {
        let n = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        eprintln!(
            "[{n}] p={} x={} G={} seed={} {:?} final={:?}",
            r.p, r.x, r.group_size, r.seed, r.status, r.final_accuracy
        );
    };
    let records = sweep::run_grid(&sweep_cfg, args.workers, Some(&out), &progress)?;
    let ok = records.iter().filter(|r| r.is_ok()).count();
    eprintln!(
        "{} of {total} grid rows present ({ok} ok, {} newly run) in {}",
        records.len(),
        counter.into_inner(),
        out.records_path().display()
    );
    if ok == 0 && !records.is_empty() {
        return Err(Error::numerical("sweep", "every run failed"));
    }
    Ok(out.records_path())
}

/// Fits the surface; writes `fit_<target>.json` and
/// `pred_vs_actual_<target>.csv` and prints the equation.
pub fn cmd_fit(args: &FitArgs) -> Result<FitSummary> {
    let mut records = sweep::read_records(&args.records).map_err(|e| match e {
        Error::Io(_) | Error::Csv(_) => Error::Parse {
            path: args.records.display().to_string(),
            message: e.to_string(),
        },
        other => other,
    })?;
    if let Some(tag) = &args.tag {
        records.retain(|r| &r.task == tag);
    }
    let obs = fit::observations(&records, args.target);
    let report = fit::ols_fit_lenient(&obs, args.target)?;
    let g_fixed = args
        .group_size
        .or_else(|| obs.iter().map(|o| o.group_size).max())
        .unwrap_or(8);
    let summary = FitSummary::new(&report, Region::default(), g_fixed);

    std::fs::create_dir_all(&args.out)?;
    let t = args.target.as_str();
    std::fs::write(
        args.out.join(format!("fit_{t}.json")),
        serde_json::to_string_pretty(&summary)?,
    )?;
    fit::write_predicted_vs_actual(&report, &args.out.join(format!("pred_vs_actual_{t}.csv")))?;

    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", summary.equation);
    println!(
        "adjusted R^2 = {:.4} (N = {})",
        summary.adjusted_r2, summary.n
    );
    print_optimum(&summary.optimum, g_fixed);
    Ok(summary)
}

fn print_optimum(o: &fit::SurfaceOptimum, g: usize) {
    println!(
        "optimum at G={g}: p={:.5} x={:.5} value={:.4} gain over (0,0)={:.4} ({:?})",
        o.p, o.x, o.value, o.gain_over_origin, o.location_class
    );
}

pub fn cmd_maximize(args: &MaximizeArgs) -> Result<()> {
    let coeffs = match (&args.report, &args.coeffs) {
        (Some(path), _) => read_report_coefficients(path)?,
        (None, Some(c)) => FitCoefficients::from_array(
            c.as_slice()
                .try_into()
                .map_err(|_| Error::config("coeffs", "need exactly 7 values"))?,
        ),
        (None, None) => return Err(Error::config("coeffs", "pass --report or --coeffs")),
    };
    let region = match &args.region {
        Some(r) => {
            if r.len() != 4 {
                return Err(Error::config(
                    "region",
                    "need exactly 4 values p_lo,p_hi,x_lo,x_hi",
                ));
            }
            if r[0] > r[1] || r[2] > r[3] {
                return Err(Error::config("region", "bounds must satisfy lo <= hi"));
            }
            Region {
                p_lo: r[0],
                p_hi: r[1],
                x_lo: r[2],
                x_hi: r[3],
            }
        }
        None => Region::default(),
    };
    if args.group_size < 1 {
        return Err(Error::config("group_size", "must be at least 1"));
    }
    let opt = fit::maximize_surface(&coeffs, region, args.group_size);
    println!("{}", serde_json::to_string_pretty(&opt)?);
    Ok(())
}

fn read_report_coefficients(path: &Path) -> Result<FitCoefficients> {
    let bad = |message: String| Error::Parse {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    serde_json::from_value(v["coefficients"].clone()).map_err(|e| bad(e.to_string()))
}

pub fn cmd_heatmap(args: &HeatmapArgs) -> Result<Vec<PathBuf>> {
    let records = sweep::read_records(&args.records).map_err(|e| Error::Parse {
        path: args.records.display().to_string(),
        message: e.to_string(),
    })?;
    let written = heatmap::write_heatmaps(&records, args.target, &args.out)?;
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("p", "bad")), 2);
        assert_eq!(exit_code(&Error::numerical("s", "nan")), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 1);
    }
}
