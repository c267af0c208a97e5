//! `nirenberg`: batch driver for the curvature analysis, validation,
//! solver and continuation runs.
//!
//! Exit codes: 0 success, 1 configuration error, 2 degenerate (non-Morse)
//! curvature, 3 validation failed or inconclusive, 4 solver failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at line {line}, column {column}: {message}")]
    Config { line: usize, column: usize, message: String },
    #[error("degenerate curvature: {0}")]
    Degenerate(String),
    #[error("validation not confirmed: {0}")]
    Inconclusive(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Degenerate(_) => 2,
            CliError::Inconclusive(_) => 3,
            CliError::Solver(_) | CliError::Io { .. } => 4,
        }
    }

    fn config(message: impl Into<String>) -> Self {
        CliError::Config { line: 0, column: 0, message: message.into() }
    }
}

impl From<nirenberg_core::Error> for CliError {
    fn from(e: nirenberg_core::Error) -> Self {
        use nirenberg_core::Error as E;
        match e {
            E::Degenerate(m) => CliError::Degenerate(m),
            E::Precondition(_) | E::Parse { .. } | E::Format(_) => CliError::config(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nirenberg", version, about = "Prescribed curvature on S^3 at half-order: analysis, validation and blow-up runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Truncation degree of the active discretization.
    #[arg(long = "L", global = true)]
    l: Option<usize>,
    /// Work in the zonal subspace about `continue.axis`.
    #[arg(long, global = true)]
    zonal: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Critical points, interaction matrices and the degree count of K.
    Analyze,
    /// Spectral identities, interaction asymptotics and the flux constant.
    Validate,
    /// One Newton solve at `solve.tau`.
    Solve,
    /// Continuation in tau with blow-up diagnostics and the comparison report.
    Continue,
    /// Reduced-model predictions at `predict.taus`.
    Predict,
    /// Rebuild the comparison report from a previous `continue` run.
    Report,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let src = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&src)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.zonal |= cli.zonal;
    if let Some(l) = cli.l {
        if cfg.zonal {
            cfg.l_zonal = l;
        } else {
            cfg.l = l;
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    commands::prepare_out(&cfg.out)?;
    match cli.command {
        Command::Analyze => commands::analyze(&cfg),
        Command::Validate => commands::validate(&cfg),
        Command::Solve => commands::solve(&cfg),
        Command::Continue => commands::continue_branch(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nirenberg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
