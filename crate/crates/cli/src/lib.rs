//! Command-line front end: single designs, parameter sweeps and config
//! validation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 no feasible starting
//! point, 3 numerical or I/O failure.

pub mod merit_arg;
pub mod output;
pub mod solve;
pub mod sweep;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dfrc_core::driver::DesignError;
use dfrc_core::merit::MeritError;
use dfrc_core::scenario::config::{read_document, ConfigError};
use dfrc_core::scenario::validate;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dfrc", version, about = "Joint radar/communication transmit-code design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one design and export its trace, beampatterns and result.
    Solve(SolveArgs),
    /// Run a parameter sweep described by a JSON spec.
    Sweep(SweepArgs),
    /// Check a scenario config and list every violation.
    Validate {
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    pub config: PathBuf,
    /// `arithmetic`, `geometric`, `harmonic`, `power-mean:P`, `exp-mean:A`,
    /// `radical-mean:A`, `mutual-info`, `fisher-info`, `detection[:PFA]`,
    /// `relative-entropy[:OMEGA]`, or a JSON merit object.
    #[arg(long, default_value = "arithmetic")]
    pub merit: String,
    /// Instance seed for generated configs; also seeds the starting point.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override every user's error-rate target.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Override every protected-direction level (linear).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Recalibrate clutter to this signal-to-clutter ratio (dB).
    #[arg(long, allow_hyphen_values = true)]
    pub scr_db: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub eta: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1)]
    pub mm_steps: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    pub spec: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the spec's setting, then to the
    /// available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid merit: {0}")]
    Merit(String),
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<MeritError> for CliError {
    fn from(e: MeritError) -> Self {
        CliError::Merit(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Merit(_) | CliError::Spec(_) => EXIT_CONFIG,
            CliError::Design(DesignError::InfeasibleStart(_)) => EXIT_INFEASIBLE,
            _ => EXIT_FAILURE,
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let res = match cli.command {
        Command::Solve(a) => solve::cmd_solve(&a),
        Command::Sweep(a) => sweep::cmd_sweep(&a),
        Command::Validate { config } => cmd_validate(&config),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_validate(path: &std::path::Path) -> Result<(), CliError> {
    let doc = read_document(path)?;
    let s = doc.build(None)?;
    let violations = validate(&s);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(ConfigError::Invalid(violations).into());
    }
    println!(
        "ok: {} subcarriers, {} users, {} protected directions, {} clutter scatterers",
        s.num_subcarriers(),
        s.num_users(),
        s.protected.len(),
        s.clutter.len()
    );
    Ok(())
}
