//! `driftkit` — simulate diffusion path ensembles, estimate drift and
//! density curves, select bandwidths by cross-validation and run the
//! replicated benchmark experiments.
//!
//! Every subcommand is deterministic given its flags: seeds are explicit (or
//! defaulted and echoed in the run manifest), and all data artifacts are
//! byte-reproducible. Each run writes a `<output>.manifest.json` listing the
//! command, the fully resolved configuration, the tool version, a timestamp
//! and the artifact paths. Set `SOURCE_DATE_EPOCH` to pin the timestamp.
//!
//! Exit codes: 0 success; 2 invalid flags or malformed input; 3 numerical
//! degeneracy (simulation divergence, degenerate density, failed selection);
//! 4 experiment failure-policy breach.
//!
//! `DRIFTKIT_THREADS` caps internal parallelism.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use driftkit_core::error::Error as CoreError;
use driftkit_core::{
    estimate_bf, estimate_density, estimate_drift, estimate_drift_2b, evaluation_grid,
    simulate_ensemble, table_experiment, BandwidthGrid, CvOptions, EstimateCurve,
    ExperimentConfig, FloorSpec, Kernel, ModelChoice, ObservationGrid, PathEnsemble, SdeModel,
    SimulationMeta,
};

#[derive(Parser)]
#[command(
    name = "driftkit",
    version,
    about = "Drift and density estimation for ensembles of diffusion paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of diffusion paths and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate a density, bf or drift curve from an ensemble CSV.
    Estimate(EstimateArgs),
    /// Evaluate the cross-validation criterion over a bandwidth grid.
    Cv(CvArgs),
    /// Run the replicated benchmark experiment for one or all preset models.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset model id (1..=4).
    #[arg(long)]
    model: u32,
    /// Number of paths.
    #[arg(long = "N", default_value_t = 50)]
    n_paths: usize,
    /// Number of observation increments per path.
    #[arg(long = "n", default_value_t = 50)]
    n_increments: usize,
    /// Observation horizon.
    #[arg(long = "T", default_value_t = 5.0)]
    t_end: f64,
    /// Observation start time (burn-in end).
    #[arg(long = "t0", default_value_t = 1.0)]
    t0: f64,
    /// Initial condition at time 0.
    #[arg(long = "x0", default_value_t = 2.0)]
    x0: f64,
    /// Internal Euler-Maruyama substeps per observation increment.
    #[arg(long, default_value_t = 10)]
    substeps: usize,
    /// Simulation seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output CSV path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum KindArg {
    Density,
    Bf,
    Drift,
}

#[derive(Args)]
struct EstimateArgs {
    /// Ensemble CSV produced by `driftkit simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Numerator bandwidth.
    #[arg(long = "h")]
    h: f64,
    /// Denominator bandwidth for the two-bandwidth drift estimator.
    #[arg(long = "eta")]
    eta: Option<f64>,
    /// Which curve to estimate.
    #[arg(long, value_enum, default_value = "drift")]
    kind: KindArg,
    /// Density floor: `data:<fraction>` or `abs:<m>`.
    #[arg(long, default_value = "data:0.01", value_parser = parse_floor)]
    floor: FloorSpec,
    /// Number of evaluation abscissae.
    #[arg(long = "eval-points", default_value_t = 200)]
    eval_points: usize,
    /// Quantile trimmed off each side of the observation range.
    #[arg(long = "eval-quantile", default_value_t = 0.05)]
    eval_quantile: f64,
    /// Output CSV path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    /// Ensemble CSV produced by `driftkit simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Bandwidth grid: `start:step:count` or an explicit `h1,h2,...` list.
    #[arg(long, value_parser = parse_grid)]
    grid: BandwidthGrid,
    /// Re-sum the leave-one-out denominator over the retained paths.
    #[arg(long)]
    renormalized: bool,
    /// Output CSV path (`h,cv`); the report JSON goes next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Preset model id (1..=4).
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    model: Option<u32>,
    /// Run all four preset models and write a combined table.
    #[arg(long)]
    all: bool,
    /// Number of Monte-Carlo replications.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Base seed; replication r uses a seed derived from (seed, r).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of paths per replication.
    #[arg(long = "N")]
    n_paths: Option<usize>,
    /// Number of observation increments per path.
    #[arg(long = "n")]
    n_increments: Option<usize>,
    /// Observation horizon.
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Observation start time.
    #[arg(long = "t0")]
    t0: Option<f64>,
    /// Initial condition.
    #[arg(long = "x0")]
    x0: Option<f64>,
    /// Internal Euler-Maruyama substeps.
    #[arg(long)]
    substeps: Option<usize>,
    /// Override the candidate bandwidth grid (`start:step:count` or list).
    #[arg(long, value_parser = parse_grid)]
    grid: Option<BandwidthGrid>,
    /// Density floor: `data:<fraction>` or `abs:<m>`.
    #[arg(long, value_parser = parse_floor)]
    floor: Option<FloorSpec>,
    #[arg(long = "eval-points")]
    eval_points: Option<usize>,
    #[arg(long = "eval-quantile")]
    eval_quantile: Option<f64>,
    /// Output stem: writes `<stem>.json`, `<stem>.csv` and the manifest.
    #[arg(short, long)]
    output: PathBuf,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError { code: exit_code_for(&e), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 1, message: e.to_string() }
    }
}

fn exit_code_for(e: &CoreError) -> u8 {
    match e {
        CoreError::SimulationDiverged { .. }
        | CoreError::DegenerateDensity
        | CoreError::DegenerateWeights { .. }
        | CoreError::SelectionFailed => 3,
        CoreError::Replication { source, .. } => exit_code_for(source),
        CoreError::Io(_) => 1,
        _ => 2,
    }
}

fn parse_floor(s: &str) -> Result<FloorSpec, String> {
    let (mode, value) = s
        .split_once(':')
        .ok_or_else(|| format!("expected data:<fraction> or abs:<m>, got {s:?}"))?;
    let value: f64 = value.parse().map_err(|_| format!("bad floor level {value:?}"))?;
    let spec = match mode {
        "data" | "data_driven" => FloorSpec::data_driven(value),
        "abs" | "absolute" => FloorSpec::absolute(value),
        other => return Err(format!("unknown floor mode {other:?}")),
    };
    spec.map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<BandwidthGrid, String> {
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:step:count, got {s:?}"));
        }
        let start: f64 = parts[0].parse().map_err(|_| format!("bad grid start {:?}", parts[0]))?;
        let step: f64 = parts[1].parse().map_err(|_| format!("bad grid step {:?}", parts[1]))?;
        let count: usize = parts[2].parse().map_err(|_| format!("bad grid count {:?}", parts[2]))?;
        BandwidthGrid::uniform(start, step, count)
    } else {
        let hs: Result<Vec<f64>, _> = s.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let hs = hs.map_err(|_| format!("bad bandwidth list {s:?}"))?;
        BandwidthGrid::new(hs)
    };
    grid.map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    timestamp: String,
    config: serde_json::Value,
    artifacts: Vec<String>,
}

fn timestamp() -> String {
    use chrono::{DateTime, SecondsFormat, Utc};
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Some(ts) = epoch.parse::<i64>().ok().and_then(|s| DateTime::from_timestamp(s, 0)) {
            return ts.to_rfc3339_opts(SecondsFormat::Secs, true);
        }
    }
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError { code: 1, message: e.to_string() })?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_manifest(
    command: &str,
    output: &Path,
    config: serde_json::Value,
    artifacts: &[&Path],
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: timestamp(),
        config,
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&manifest_path(output), &manifest)
}

fn read_ensemble(path: &Path) -> Result<PathEnsemble, CliError> {
    let file = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(PathEnsemble::read_csv(BufReader::new(file))?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let model = SdeModel::preset(args.model)?.with_x0(args.x0);
    let grid = ObservationGrid::new(args.t0, args.t_end, args.n_increments)?;
    let ens = simulate_ensemble(&model, args.n_paths, &grid, args.substeps, args.seed)?;
    let mut w = BufWriter::new(File::create(&args.output)?);
    ens.write_csv(&mut w)?;
    w.flush()?;

    let meta = SimulationMeta {
        model: model.name().to_string(),
        x0: args.x0,
        n_paths: args.n_paths,
        substeps: args.substeps,
        seed: args.seed,
        grid,
    };
    write_manifest(
        "simulate",
        &args.output,
        serde_json::to_value(&meta).unwrap(),
        &[&args.output],
    )
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let ens = read_ensemble(&args.input)?;
    let kernel = Kernel::gaussian();
    let xs = evaluation_grid(&ens, args.eval_quantile, args.eval_points)?;
    let curve: EstimateCurve = match (args.kind, args.eta) {
        (KindArg::Density, None) => estimate_density(&ens, &kernel, args.h, &xs)?,
        (KindArg::Bf, None) => estimate_bf(&ens, &kernel, args.h, &xs)?,
        (KindArg::Drift, None) => estimate_drift(&ens, &kernel, args.h, &xs, &args.floor)?,
        (KindArg::Drift, Some(eta)) => {
            estimate_drift_2b(&ens, &kernel, args.h, eta, &xs, &args.floor)?
        }
        (_, Some(_)) => {
            return Err(CliError::usage("--eta only applies to --kind drift"));
        }
    };
    let mut w = BufWriter::new(File::create(&args.output)?);
    curve.write_csv(&mut w)?;
    w.flush()?;

    let config = serde_json::json!({
        "input": args.input.display().to_string(),
        "kind": curve.kind().to_string(),
        "h": args.h,
        "eta": args.eta,
        "floor": args.floor,
        "kernel": kernel.name(),
        "eval_points": args.eval_points,
        "eval_quantile": args.eval_quantile,
        "grid_rule": "uniform abscissae over the [q, 1-q] quantile range of all observations",
    });
    write_manifest("estimate", &args.output, config, &[&args.output])
}

fn cmd_cv(args: CvArgs) -> Result<(), CliError> {
    let ens = read_ensemble(&args.input)?;
    let kernel = Kernel::gaussian();
    let options = CvOptions { renormalized: args.renormalized };
    let report = driftkit_core::bandwidth::select_bandwidth_with(&ens, &kernel, &args.grid, &options)?;

    let mut w = BufWriter::new(File::create(&args.output)?);
    report.write_csv(&mut w)?;
    w.flush()?;

    let mut report_path = args.output.with_extension("json");
    if report_path == args.output {
        report_path = args.output.with_extension("report.json");
    }
    write_json(&report_path, &report)?;

    let config = serde_json::json!({
        "input": args.input.display().to_string(),
        "grid": args.grid.hs(),
        "kernel": kernel.name(),
        "renormalized": args.renormalized,
        "selected": report.selected,
    });
    write_manifest("cv", &args.output, config, &[&args.output, &report_path])
}

fn experiment_config(args: &ExperimentArgs, model_id: u32) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::preset_defaults(model_id)?;
    cfg.model = ModelChoice::Preset(model_id);
    cfg.replications = args.reps;
    cfg.base_seed = args.seed;
    if let Some(v) = args.n_paths {
        cfg.n_paths = v;
    }
    if let Some(v) = args.n_increments {
        cfg.n_increments = v;
    }
    if let Some(v) = args.t_end {
        cfg.t_end = v;
    }
    if let Some(v) = args.t0 {
        cfg.t0 = v;
    }
    if let Some(v) = args.x0 {
        cfg.x0 = v;
    }
    if let Some(v) = args.substeps {
        cfg.substeps = v;
    }
    if let Some(grid) = &args.grid {
        cfg.bandwidth_grid = grid.clone();
    }
    if let Some(floor) = args.floor {
        cfg.floor = floor;
    }
    if let Some(v) = args.eval_points {
        cfg.eval_points = v;
    }
    if let Some(v) = args.eval_quantile {
        cfg.eval_quantile = v;
    }
    Ok(cfg)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let model_ids: Vec<u32> = if args.all { vec![1, 2, 3, 4] } else { vec![args.model.unwrap()] };

    let mut summaries = Vec::new();
    for &id in &model_ids {
        let cfg = experiment_config(&args, id)?;
        summaries.push(table_experiment(&cfg)?);
    }

    let json_path = args.output.with_extension("json");
    let csv_path = args.output.with_extension("csv");
    if args.all {
        write_json(&json_path, &summaries)?;
        let mut w = BufWriter::new(File::create(&csv_path)?);
        write!(w, "statistic")?;
        for id in &model_ids {
            write!(w, ",model_{id}")?;
        }
        writeln!(w)?;
        write!(w, "100x_mean_mse")?;
        for s in &summaries {
            write!(w, ",{}", 100.0 * s.mean_mse)?;
        }
        writeln!(w)?;
        write!(w, "100x_std_mse")?;
        for s in &summaries {
            write!(w, ",{}", 100.0 * s.std_mse)?;
        }
        writeln!(w)?;
        w.flush()?;
    } else {
        let summary = &summaries[0];
        write_json(&json_path, summary)?;
        let mut w = BufWriter::new(File::create(&csv_path)?);
        writeln!(w, "rep,seed,selected_h,mse,mean_proposal_mse")?;
        for r in &summary.per_rep {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.rep_index, r.seed, r.selected_h, r.mse, r.mean_proposal_mse
            )?;
        }
        w.flush()?;
    }

    for s in &summaries {
        for warning in &s.warnings {
            eprintln!("warning: {}: {warning}", s.config.model);
        }
    }

    let config = serde_json::json!({
        "models": model_ids,
        "reps": args.reps,
        "seed": args.seed,
        "configs": summaries.iter().map(|s| serde_json::to_value(&s.config).unwrap()).collect::<Vec<_>>(),
    });
    write_manifest("experiment", &args.output, config, &[&csv_path, &json_path])?;

    if summaries.iter().any(|s| s.failure_policy_breached()) {
        let failed: Vec<String> = summaries
            .iter()
            .filter(|s| s.failure_policy_breached())
            .map(|s| format!("{} ({} of {} replications failed)", s.config.model, s.failures, args.reps))
            .collect();
        return Err(CliError { code: 4, message: format!("failure policy breached: {}", failed.join("; ")) });
    }
    Ok(())
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("DRIFTKIT_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid DRIFTKIT_THREADS={raw:?}"),
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
