//! `cascade`: drive a two-tier draft/verify/escalate cascade over a
//! question dataset, explore routing policies analytically, and
//! re-summarize stored runs.
//!
//! Exit codes: 0 on success, 1 when a run completed partially (some
//! questions failed), 2 on configuration or usage errors.

mod config;
mod report;
mod run;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::{RunConfig, RunOverrides};
use crate::report::ReportArgs;
use crate::simulate::SimulateArgs;

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Two-tier model cascade: draft small, verify large, escalate on rejection"
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Where to write output files.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Suppress the stdout summary table.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the cascade over a dataset and write traces + reports.
    Run(RunOverrides),
    /// Evaluate routing policies offline (closed form, sampling, fits,
    /// sweeps).
    Simulate(SimulateArgs),
    /// Re-summarize stored runs; merge several into one comparison.
    Report(ReportArgs),
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let file_config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Run(overrides) => {
            let resolved = config::resolve(&file_config, overrides, cli.output_dir.as_deref())?;
            run::execute(&resolved, cli.quiet)
        }
        Command::Simulate(args) => simulate::execute(args),
        Command::Report(args) => report::execute(args, cli.output_dir.as_deref(), cli.quiet),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
