//! `hemosim`: solve the integrated model, run property experiments and check
//! configurations. Exit codes: 0 pass or skip, 2 config, 3 solver, 4 verdict.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hemosim", version, about = "Structured blood cell production model: solver and property checks")]
struct Cli {
    /// Output directory for CSV, sidecar and report files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized inputs; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured model and write `field.csv` and `field.meta.json`.
    Run { config: PathBuf },
    /// Run one experiment and write `<kind>.json` and `<kind>.txt`.
    Experiment {
        /// uniqueness, extinction, invariance, positivity, resolvent or picard-rate.
        kind: String,
        config: PathBuf,
    },
    /// Validate a config and print the flow and margin diagnostics.
    Check { config: PathBuf },
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Solver(e.to_string()))?;
    }
    match &cli.command {
        Command::Run { config } => {
            let cfg = config::load(config)?;
            commands::run(&cfg, &cli.out, cli.seed.unwrap_or(cfg.run.seed))
        }
        Command::Experiment { kind, config } => {
            let cfg = config::load(config)?;
            commands::experiment(kind, &cfg, &cli.out, cli.seed.unwrap_or(cfg.run.seed))
        }
        Command::Check { config } => commands::check(&config::load(config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hemosim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
