mod commands;
mod config;
mod error;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, Settings};
use error::{CliError, CliResult};

/// Heteroskedasticity-adjusted multiple testing of composite null hypotheses.
///
/// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
/// `HAMT_THREADS` caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "hamt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the σ-dependent prior and test every unit of a CSV file.
    ///
    /// Input is `x,sigma` (optionally `id`) or replicate-level `id,value`.
    /// Writes `decisions.csv` and `summary.json` under --out, or the
    /// decisions to stdout and the summary to stderr.
    Test {
        input: PathBuf,
        /// Reuse a model written by `deconv` instead of fitting.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a built-in Monte-Carlo scenario and print the aggregate table.
    Simulate { scenario: String },
    /// Analytic oracle and z-oracle constants for a built-in scenario.
    Oracle { scenario: String },
    /// Fit the prior and write `model.json`, `density.csv` and `prior.csv`.
    Deconv { input: PathBuf },
    /// Draw one replicate of a built-in scenario as CSV.
    Generate { scenario: String },
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("HAMT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::input(format!("HAMT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let s = Settings::resolve(&cli.flags)?;
    match &cli.command {
        Command::Test { input, model } => commands::test(&s, input, model.as_deref()),
        Command::Simulate { scenario } => commands::simulate(&s, scenario),
        Command::Oracle { scenario } => commands::oracle(&s, scenario),
        Command::Deconv { input } => commands::deconv(&s, input),
        Command::Generate { scenario } => commands::generate_data(&s, scenario),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
