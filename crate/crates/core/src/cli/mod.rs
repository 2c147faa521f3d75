//! Batch orchestration: configuration, scenario pipelines and their outputs.
//!
//! Each run writes into its output directory:
//!
//! * `config.toml`, the resolved configuration;
//! * `summary.json` and its text mirror `summary.txt`;
//! * scenario series as CSV and margin reports as JSON (see `docs/FORMATS.md`);
//! * `final.hfol`, the last stored levels of a model evolution.

mod config;
mod emit;
mod report;
mod scenarios;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{
    parse_config, parse_config_with, ConfigError, DataConfig, DecayConfig, GridConfig, Overrides, Profile, RunConfig,
    RunSpec, Scenario, CONFIG_SCHEMA,
};
pub use emit::{emit_series, format_float, Cell, EmitError, Schema, ToRow, SERIES_VERSION};
pub use report::{config_hash, CriterionOutcome, ReportSummary, SUMMARY_SCHEMA};
pub use suites::{
    energy_drift, frame_identity, manufactured_defect, manufactured_pair, observed_orders, sobolev_family,
    sobolev_ratio_at, DriftRow, FrameRow, SobolevMember, SuiteError, FRAME_FIELDS,
};

use crate::analysis::AnalysisError;
use crate::bounds::BoundsError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("HFOIL_THREADS: {0}")]
    Threads(String),
}

/// Worker count from `HFOIL_THREADS`, `None` when unset.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("HFOIL_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Threads(format!("expected a positive integer, got {v:?}"))),
        },
    }
}

/// Runs the configured scenario and writes its outputs. Solver and analysis
/// failures become entries of the summary; only configuration and IO errors
/// are returned as `Err`. With `deterministic`, the run uses one worker.
pub fn run_scenario(config: &RunConfig) -> Result<ReportSummary, CliError> {
    let threads = if config.deterministic { Some(1) } else { thread_cap()? };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Threads(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &RunConfig) -> Result<ReportSummary, CliError> {
    let start = Instant::now();
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.clone(), source })?;
    let write = |name: &str, text: &str| {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    };
    write("config.toml", &config.to_toml())?;
    let mut rep = ReportSummary::new(config);
    match scenarios::dispatch(config, out, &mut rep) {
        Ok(()) => {}
        Err(e @ (CliError::Io { .. } | CliError::Emit(_) | CliError::Threads(_))) => return Err(e),
        Err(e) => rep.errors.push(e.to_string()),
    }
    rep.wall_time_s = start.elapsed().as_secs_f64();
    rep.finish();
    write("summary.json", &rep.to_json())?;
    write("summary.txt", &rep.to_text())?;
    Ok(rep)
}

#[derive(Debug, Parser)]
#[command(name = "hfoil", version, about = "Hyperboloidal-foliation laboratory for the coupled wave / Klein-Gordon model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled evolution: bootstrap hierarchy tables, decay fits, snapshot.
    ModelEvolution(RunArgs),
    /// Curved Klein-Gordon runs against the sup-norm envelope.
    LinearKgBound(RunArgs),
    /// Sourced-wave runs against the wave envelope.
    LinearWaveBound(RunArgs),
    /// Sobolev ratio of a test family on hyperboloids.
    SobolevSuite(RunArgs),
    /// Semi-hyperboloidal against Cartesian d'Alembertian.
    FrameIdentitySuite(RunArgs),
    /// Manufactured-solution order and hyperboloidal energy drift.
    ConvergenceSuite(RunArgs),
    /// Print the resolved default configuration of a scenario.
    Defaults {
        #[arg(value_enum)]
        scenario: Scenario,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid spacing `dx` (the coarsest grid of refinement studies).
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Data amplitude.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Last hyperboloid.
    #[arg(long)]
    pub until_s: Option<f64>,
    /// Single worker and sequential reductions.
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn scenario(&self) -> Option<(Scenario, &RunArgs)> {
        Some(match self {
            Command::ModelEvolution(a) => (Scenario::ModelEvolution, a),
            Command::LinearKgBound(a) => (Scenario::LinearKgBound, a),
            Command::LinearWaveBound(a) => (Scenario::LinearWaveBound, a),
            Command::SobolevSuite(a) => (Scenario::SobolevSuite, a),
            Command::FrameIdentitySuite(a) => (Scenario::FrameIdentitySuite, a),
            Command::ConvergenceSuite(a) => (Scenario::ConvergenceSuite, a),
            Command::Defaults { .. } => return None,
        })
    }
}

/// Resolves the configuration of a subcommand: file, then flags.
pub fn resolve(scenario: Scenario, args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?,
        None => String::new(),
    };
    let o = Overrides {
        scenario: Some(scenario),
        resolution: args.resolution,
        epsilon: args.epsilon,
        until_s: args.until_s,
        deterministic: args.deterministic,
        out: args.out.clone(),
    };
    parse_config_with(&text, &o).map_err(|e| match (&args.config, e) {
        (Some(p), e) => CliError::Io { path: p.clone(), source: std::io::Error::new(std::io::ErrorKind::InvalidData, e) },
        (None, e) => e.into(),
    })
}

/// Entry point of the `hfoil` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some((scenario, args)) = cli.command.scenario() else {
        if let Command::Defaults { scenario } = cli.command {
            print!("{}", RunConfig::defaults(scenario).to_toml());
        }
        return ExitCode::SUCCESS;
    };
    let cfg = match resolve(scenario, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("hfoil: {e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario(&cfg) {
        Ok(rep) => {
            print!("{}", rep.to_text());
            println!("\noutputs in {}", cfg.out.display());
            if rep.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("hfoil: {e}");
            ExitCode::from(2)
        }
    }
}
