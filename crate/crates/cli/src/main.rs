//! `swicert`: stability certificates for switched linear systems whose
//! switching is constrained by asymptotic densities.
//!
//! Exit codes: 0 success (or certified), 1 certificate not granted,
//! 2 bad input, 3 numerical failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swicert_core::{Error, Result};

use commands::{Action, CommandOutput};

#[derive(Parser)]
#[command(
    name = "swicert",
    version,
    about = "Stability certificates for switched linear systems under density-constrained switching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build certificate pairs and the jump-factor table
    Synthesize(CommonArgs),
    /// Evaluate the stability certificate for the configured switching statistics
    Certify(CommonArgs),
    /// Integrate trajectories and check them against the certificate envelopes
    Simulate(CommonArgs),
    /// Emit the configured switching signal as CSV
    Generate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Analysis configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report and any data files; simulate falls back to
    /// the working directory for its trajectory files
    #[arg(long)]
    out: Option<PathBuf>,
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("SWICERT_SEED") {
        Ok(text) => text.trim().parse().map(Some).map_err(|_| {
            Error::Configuration(format!(
                "SWICERT_SEED must be an unsigned integer, got {text:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Configuration(format!("SWICERT_SEED: {e}"))),
    }
}

fn execute(cli: &Cli) -> Result<CommandOutput> {
    let (action, args) = match &cli.command {
        Command::Synthesize(args) => (Action::Synthesize, args),
        Command::Certify(args) => (Action::Certify, args),
        Command::Simulate(args) => (Action::Simulate, args),
        Command::Generate(args) => (Action::Generate, args),
    };
    let mut loaded = config::load(&args.config)?;
    if let Some(seed) = seed_override()? {
        loaded.apply_seed(seed);
    }
    commands::run(action, &loaded, args.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(output) => {
            print!("{}", output.stdout);
            match output.certified {
                Some(false) => ExitCode::from(1),
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
