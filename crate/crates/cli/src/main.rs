//! `torhsmm`: fit, simulate and evaluate hidden semi-Markov models for
//! pairs of angles.
//!
//! Exit status: 0 on success, 2 for usage errors, 3 for bad input data and
//! 4 when estimation fails numerically.

mod commands;
mod config;
mod failure;
mod output;
mod series;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::bootstrap::BootstrapCmd;
use commands::fit::FitCmd;
use commands::profiles::ProfilesCmd;
use commands::segment::SegmentCmd;
use commands::simulate::SimulateCmd;
use commands::study::StudyCmd;
use commands::sweep::SweepCmd;
use config::ConfigFile;
use failure::{Failure, Kind};

#[derive(Debug, Parser)]
#[command(name = "torhsmm", version, about = "Hidden semi-Markov models for toroidal time series")]
struct Cli {
    /// Flat TOML file of option defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a K-state model to a series.
    Fit(FitCmd),
    /// Simulate a series from a scenario or a model file.
    Simulate(SimulateCmd),
    /// Decode a series under a fitted model.
    Segment(SegmentCmd),
    /// Parametric bootstrap standard errors of a fitted model.
    Bootstrap(BootstrapCmd),
    /// Fit a range of state counts and compare them by ICL.
    Sweep(SweepCmd),
    /// Replicated simulation study over scenarios, lengths and truncations.
    Study(StudyCmd),
    /// Hazard and dwell curves at per-state covariate quartiles.
    Profiles(ProfilesCmd),
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Fit(c) => commands::fit::run(c, &cfg),
        Command::Simulate(c) => commands::simulate::run(c, &cfg),
        Command::Segment(c) => commands::segment::run(c, &cfg),
        Command::Bootstrap(c) => commands::bootstrap::run(c, &cfg),
        Command::Sweep(c) => commands::sweep::run(c, &cfg),
        Command::Study(c) => commands::study::run(c, &cfg),
        Command::Profiles(c) => commands::profiles::run(c, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Kind::Usage.exit_code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
