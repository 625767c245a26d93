//! `postcut`: ingest counties and post offices, build the postal network,
//! seed and sample district plans, and analyze cut edges.

mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "postcut", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load units and post offices, assign hosts, build adjacency.
    Ingest,
    /// Compute H0 persistence, pick epsilon, build the postal network.
    Network,
    /// Weighted k-means seed plan and stochastic rebalancing.
    Seed,
    /// Run the Markov chain from the rebalanced plan.
    Mcmc,
    /// Fit the cut-edge distribution and score the reference plan.
    Analyze,
    /// Run every stage and collect the results in one directory.
    Report,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg).map(drop),
        Command::Network => commands::network(&cfg).map(drop),
        Command::Seed => commands::seed(&cfg).map(drop),
        Command::Mcmc => commands::mcmc(&cfg).map(drop),
        Command::Analyze => commands::analyze(&cfg).map(drop),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
