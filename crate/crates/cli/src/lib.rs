//! Experiment runner for the lattice cocycle library: TOML configuration,
//! CSV output and plain-text verification reports.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "lattice-lab", version, about = "Simulate and verify non-autonomous lattice reaction-diffusion systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides output.directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensemble runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Sampling seed, overrides run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One trajectory: trajectory.csv and energy.csv with the Gronwall envelope.
    Simulate,
    /// Absorbing-ball entry and permanence over an ensemble.
    Absorb,
    /// Weighted-tail decay and the tail differential inequality.
    Tails,
    /// Attractor sections, attraction ladder and invariance residual.
    Attractor,
    /// Compact-open distance matrix over the hull shift grid.
    Hull,
}

/// Exit status: verification failures are findings, not crashes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Passed = 0,
    Failed = 1,
    Error = 2,
}

pub fn load_config(cli: &Cli) -> anyhow::Result<config::ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => config::ExperimentConfig::load(path)?,
        None => config::ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

pub fn run(command: Command, cfg: &config::ExperimentConfig) -> anyhow::Result<commands::CommandResult> {
    match command {
        Command::Simulate => commands::simulate(cfg),
        Command::Absorb => commands::absorb(cfg),
        Command::Tails => commands::tails(cfg),
        Command::Attractor => commands::attractor(cfg),
        Command::Hull => commands::hull(cfg),
    }
}
