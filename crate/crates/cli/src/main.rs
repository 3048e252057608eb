//! `nshvi` command line: sign-condition checks, single solves, sweeps,
//! dependence experiments and control runs.
//!
//! Exit codes: 0 success, 1 sign condition violated, 2 invalid config,
//! 3 solver did not converge (results are still written), 4 I/O failure.

mod commands;
mod configs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(
    name = "nshvi",
    version,
    about = "Navier-Stokes flow with a nonmonotone boundary law"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomised starts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Print one-sided limits, the sign-condition certificate and envelope samples.
    CheckTheta,
    /// Continuation solve along the configured schedule.
    Solve,
    /// Continuation for several mode cutoffs with Cauchy differences.
    Sweep,
    /// Dependence of the solution on the law or on the force.
    Depend,
    /// Optimal control by projected direct search or gradient descent.
    Control,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Hypothesis(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Hypothesis(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
        }
    }
}

/// Completed run; `converged = false` maps to exit code 3.
pub struct Outcome {
    pub converged: bool,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let config = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let out = || {
        cli.out
            .as_deref()
            .ok_or_else(|| CliError::Config("--out is required".into()))
    };
    match cli.command {
        Command::CheckTheta => commands::check_theta(config, cli.out.as_deref()),
        Command::Solve => commands::solve(config, out()?, cli.seed),
        Command::Sweep => commands::sweep(config, out()?, cli.seed),
        Command::Depend => commands::depend(config, out()?, cli.seed),
        Command::Control => commands::control(config, out()?, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome { converged: true }) => ExitCode::SUCCESS,
        Ok(Outcome { converged: false }) => {
            eprintln!("warning: solver did not converge; results are flagged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
