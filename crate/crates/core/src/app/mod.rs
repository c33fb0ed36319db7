//! Command-line front end: `fuse`, `simulate` and `bench`.

pub mod bench;
pub mod fuse;
pub mod manifest;
pub mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::FusionError;

#[derive(Debug, Parser)]
#[command(name = "labelfuse", version, about = "Unsupervised fusion of classifier and annotator labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse a response file into labels, posteriors and parameter estimates.
    Fuse(fuse::FuseArgs),
    /// Generate a synthetic dataset with its generating parameters.
    Simulate(simulate::SimulateArgs),
    /// Monte Carlo sweep over a synthetic protocol.
    Bench(bench::BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Moment matching.
    Mm,
    /// Majority voting.
    Mv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Refine {
    None,
    Em,
}

impl From<Init> for crate::sequential::InitMethod {
    fn from(i: Init) -> Self {
        match i {
            Init::Mm => Self::MomentMatching,
            Init::Mv => Self::MajorityVote,
        }
    }
}

/// Exit status 1: unusable input or options. Exit status 2: the pipeline
/// failed numerically.
pub fn exit_code(e: &FusionError) -> u8 {
    match e {
        FusionError::Numeric(_) | FusionError::Degenerate(_) | FusionError::Domain(_) | FusionError::NotStochastic { .. } => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::Fuse(a) => fuse::run(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Bench(a) => bench::run(&a),
    }
}

/// Parses `std::env::args`, runs the command and reports failures on stderr.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub(crate) fn write_file(dir: &std::path::Path, name: &str, contents: &str) -> crate::Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> crate::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
