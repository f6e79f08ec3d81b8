//! Command-line front end: scenario ingestion, deterministic-equivalent and
//! Monte Carlo sweeps, and stream-allocation search, emitting plot-ready
//! CSV (and an optional JSON mirror with solver diagnostics).
//!
//! Exit codes: 0 on success, 1 on argument/parse/validation errors, 2 on
//! numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use detequiv::solver::SolverConfig;

use detequiv_cli::run::{run_stream_search, run_sweep, Mode, Unit};
use detequiv_cli::scnfile::{BuiltScenario, ScenarioFile};

#[derive(Parser)]
#[command(
    name = "detequiv",
    version,
    about = "Deterministic equivalents and Monte Carlo validation for isometrically precoded MIMO channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic equivalents over the SNR grid (no Monte Carlo).
    Solve(RunArgs),
    /// Monte Carlo replication statistics over the SNR grid.
    Mc(RunArgs),
    /// Deterministic equivalents and Monte Carlo statistics side by side.
    Sweep(RunArgs),
    /// Exhaustive stream-allocation search (interference scenarios, one SNR).
    StreamSearch(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UnitArg {
    Nats,
    Bits,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (.scn).
    #[arg(long)]
    scenario: PathBuf,

    /// SNR grid in dB: comma list "0,10,20" or range "start:step:end".
    /// Defaults to the scenario's grid (-5:5:30).
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,

    /// Monte Carlo replications per grid point (stream-search: optional
    /// cross-check of the argmax cell; 0 disables it).
    #[arg(long, default_value_t = 0)]
    reps: usize,

    /// Base seed for all random streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Fixed-point stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Iteration cap for the fixed-point loops.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,

    /// Output unit for rate-like values.
    #[arg(long, value_enum, default_value_t = UnitArg::Nats)]
    unit: UnitArg,

    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Also write a JSON mirror with solver diagnostics (requires --out).
    #[arg(long)]
    json: bool,
}

/// Everything one invocation is going to do, resolved and validated.
struct RunManifest {
    mode: ModeOrSearch,
    scenario: ScenarioFile,
    snr_db: Vec<f64>,
    reps: usize,
    seed: u64,
    cfg: SolverConfig<f64>,
    unit: Unit,
    out: Option<PathBuf>,
    json: bool,
    workers: usize,
}

enum ModeOrSearch {
    Sweep(Mode),
    StreamSearch,
}

enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Numerical(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

fn numerical_error(e: detequiv::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Parses "a,b,c" or "start:step:end" (inclusive) into a dB grid.
fn parse_snr_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Usage(m);
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!(
                "SNR range must be start:step:end, got '{text}'"
            )));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("bad SNR range '{text}'")))?;
        let (start, step, end) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || end < start {
            return Err(bad("SNR range needs positive step and end >= start".into()));
        }
        let count = ((end - start) / step + 1.5) as usize;
        (0..count)
            .map(|i| start + step * i as f64)
            .filter(|v| *v <= end + 1e-9)
            .collect()
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("bad SNR list '{text}'")))?
    };
    if grid.is_empty() {
        return Err(bad("SNR grid is empty".into()));
    }
    Ok(grid)
}

fn build_manifest(mode: ModeOrSearch, args: &RunArgs) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.scenario.display())))?;
    let scenario = ScenarioFile::parse(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.scenario.display())))?;

    let snr_db = match &args.snr_db {
        Some(text) => parse_snr_grid(text)?,
        None => (0..8).map(|i| -5.0 + 5.0 * i as f64).collect(),
    };

    let mut cfg = SolverConfig::<f64>::default();
    if let Some(tol) = args.tol {
        if !(tol > 0.0) {
            return Err(CliError::Usage(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        cfg.tol = tol;
    }
    if let Some(iters) = args.max_iter {
        if iters == 0 {
            return Err(CliError::Usage("iteration cap must be positive".into()));
        }
        cfg.max_outer = iters;
        cfg.max_inner = iters;
    }

    let needs_mc = matches!(mode, ModeOrSearch::Sweep(Mode::Mc | Mode::Sweep));
    if needs_mc && args.reps == 0 {
        return Err(CliError::Usage("Monte Carlo runs need --reps >= 1".into()));
    }
    if matches!(mode, ModeOrSearch::StreamSearch) {
        if !matches!(scenario, ScenarioFile::Interference(_)) {
            return Err(CliError::Usage(
                "stream-search requires an interference-family scenario".into(),
            ));
        }
        if snr_db.len() != 1 {
            return Err(CliError::Usage(
                "stream-search runs at a single SNR; pass one --snr-db value".into(),
            ));
        }
    }
    if args.json && args.out.is_none() {
        return Err(CliError::Usage("--json requires --out".into()));
    }

    Ok(RunManifest {
        mode,
        scenario,
        snr_db,
        reps: args.reps,
        seed: args.seed,
        cfg,
        unit: match args.unit {
            UnitArg::Nats => Unit::Nats,
            UnitArg::Bits => Unit::Bits,
        },
        out: args.out.clone(),
        json: args.json,
        workers: args.workers,
    })
}

fn write_outputs(
    manifest: &RunManifest,
    csv: &str,
    json: serde_json::Value,
) -> Result<(), CliError> {
    match &manifest.out {
        Some(path) => {
            std::fs::write(path, csv)
                .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
            if manifest.json {
                let jpath = path.with_extension("json");
                let body = serde_json::to_string_pretty(&json).expect("serializable");
                std::fs::write(&jpath, body).map_err(|e| {
                    CliError::Usage(format!("cannot write {}: {e}", jpath.display()))
                })?;
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn execute(manifest: &RunManifest) -> Result<(), CliError> {
    if manifest.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(manifest.workers)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    let built = manifest.scenario.build().map_err(numerical_error)?;
    match &manifest.mode {
        ModeOrSearch::Sweep(mode) => {
            let out = run_sweep(
                &built,
                *mode,
                &manifest.snr_db,
                manifest.reps,
                manifest.seed,
                manifest.unit,
                &manifest.cfg,
            );
            let json = serde_json::json!({
                "command": match mode { Mode::Solve => "solve", Mode::Mc => "mc", Mode::Sweep => "sweep" },
                "seed": manifest.seed,
                "reps": manifest.reps,
                "snr_db": manifest.snr_db,
                "scenario": manifest.scenario.emit(),
                "output": out.json,
            });
            write_outputs(manifest, &out.csv, json)?;
            if out.any_failed {
                return Err(CliError::Numerical(
                    "one or more rows failed; see status column".into(),
                ));
            }
            Ok(())
        }
        ModeOrSearch::StreamSearch => {
            let BuiltScenario::Interference { params, .. } = &built else {
                return Err(CliError::Usage(
                    "stream-search requires an interference scenario".into(),
                ));
            };
            let reps = if manifest.reps > 0 { manifest.reps } else { 0 };
            let out = run_stream_search(
                params,
                manifest.snr_db[0],
                reps,
                manifest.seed,
                manifest.unit,
                &manifest.cfg,
            )
            .map_err(numerical_error)?;
            let json = serde_json::json!({
                "command": "stream-search",
                "seed": manifest.seed,
                "scenario": manifest.scenario.emit(),
                "output": out.json,
            });
            write_outputs(manifest, &out.csv, json)?;
            if out.any_failed {
                return Err(CliError::Numerical("one or more grid cells failed".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Solve(a) => (ModeOrSearch::Sweep(Mode::Solve), a),
        Command::Mc(a) => (ModeOrSearch::Sweep(Mode::Mc), a),
        Command::Sweep(a) => (ModeOrSearch::Sweep(Mode::Sweep), a),
        Command::StreamSearch(a) => (ModeOrSearch::StreamSearch, a),
    };
    let manifest = match build_manifest(mode, args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.code();
        }
    };
    match execute(&manifest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
