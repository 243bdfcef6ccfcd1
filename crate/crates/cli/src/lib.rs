//! Command-line front end: scenario loading, verification, grids and figure presets.
//!
//! Exit codes: 0 when every check passes, 1 on a numeric tolerance
//! failure, 2 on a configuration or validation error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod verify;

use commands::{cmd_asymptotics, cmd_expand, cmd_figure, cmd_grid, cmd_verify, parse_axis, parse_times};
use config::load_scenario;
use wronskp_core::kpfield::GridSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ToleranceFailure,
}

impl Outcome {
    pub fn from_pass(pass: bool) -> Self {
        if pass { Outcome::Pass } else { Outcome::ToleranceFailure }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::ToleranceFailure => 1,
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Parser)]
#[command(name = "wronskp", version, about = "Multi-component Wronskian solutions of the KP equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every verification on a scenario and print a residual table.
    Verify {
        /// Scenario JSON path, or `preset:N` for figure N.
        scenario: String,
    },
    /// Sample u on a grid and write CSV (x,y,t,u).
    Grid {
        scenario: String,
        /// x range as a:b:n
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// y range as a:b:n
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        /// Comma-separated times.
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        t: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predicted asymptotic line solitons, optionally measured in the far field.
    Asymptotics {
        scenario: String,
        /// Fit the far-field profiles and compare with the predictions.
        #[arg(long)]
        measure: bool,
        /// Probe distance |y| for --measure.
        #[arg(long, default_value_t = 30.0)]
        probe_y: f64,
        /// Time for --measure.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t: f64,
    },
    /// Reproduce a figure preset: grid CSV plus verification report.
    Figure {
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the tau function as a CSV term list.
    Expand {
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Verify { scenario } => cmd_verify(&load_scenario(&scenario)?, out),
        Command::Grid { scenario, x, y, t, out: path } => {
            let grid = GridSpec::new(parse_axis(&x)?, parse_axis(&y)?, parse_times(&t)?)
                .map_err(|e| CliError::Config(e.to_string()))?;
            cmd_grid(&load_scenario(&scenario)?, &grid, &path, out)
        }
        Command::Asymptotics { scenario, measure, probe_y, t } => {
            cmd_asymptotics(&load_scenario(&scenario)?, measure.then_some((probe_y, t)), out)
        }
        Command::Figure { n, out: dir } => cmd_figure(n, &dir, out),
        Command::Expand { scenario, out: path } => cmd_expand(&load_scenario(&scenario)?, path.as_deref(), out),
    }
}
