//! `cbda`: generate synthetic scenarios, run acquisition strategies on them
//! and compare the resulting label sets.
//!
//! Exit codes: 0 success, 2 usage or config error, 1 anything else.

mod commands;
mod config;
mod lock;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use cbda_core::{CountMode, Heuristic, Strategy};
use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;

/// Bad input from the user: arguments, config or files. Exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "cbda",
    version,
    about = "Class-balanced pixel acquisition experiments"
)]
struct Cli {
    /// Directory under which default output directories are created
    #[arg(
        long,
        global = true,
        env = "CBDA_OUTPUT_ROOT",
        default_value = "cbda-out"
    )]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the ground truth of a scenario
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an AL loop and write labels, metrics and a summary
    Run {
        config: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        #[arg(long, value_parser = parse_heuristic)]
        heuristic: Option<Heuristic>,
        /// Total budget as a fraction of all pixels
        #[arg(long)]
        budget: Option<f64>,
        /// Number of AL iterations; the noise schedule is resampled to match
        #[arg(long)]
        iterations: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate finished runs of the same scenario as CSV
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Imbalance and spread of a run directory or active-label file
    Metrics {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::GroundTruth)]
        count_mode: Mode,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        bins: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    GroundTruth,
    Pseudo,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: cbda_core::Error| e.to_string())
}

fn parse_heuristic(s: &str) -> Result<Heuristic, String> {
    s.parse().map_err(|e: cbda_core::Error| e.to_string())
}

fn is_usage(err: &anyhow::Error) -> bool {
    use cbda_core::Error as E;
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<E>(),
                Some(
                    E::Config { .. }
                        | E::Schedule(_)
                        | E::Shape(_)
                        | E::Class { .. }
                        | E::ClassCount(_)
                        | E::Format(_)
                        | E::EmptySelection
                )
            )
    })
}

/// Writes to stdout; a reader that went away early is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let dir = commands::generate(&config, out, &cli.output_root)?;
            emit(&format!("{}\n", dir.display()))?;
        }
        Command::Run {
            config,
            strategy,
            heuristic,
            budget,
            iterations,
            seed,
            out,
        } => {
            let overrides = Overrides {
                strategy,
                heuristic,
                budget,
                iterations,
                seed,
            };
            let dir = commands::run(&config, &overrides, out, &cli.output_root)?;
            emit(&format!("{}\n", dir.display()))?;
        }
        Command::Compare { runs, out } => {
            let table = commands::compare(&runs)?;
            if let Some(path) = out {
                std::fs::write(&path, &table)?;
            }
            emit(&table)?;
        }
        Command::Metrics {
            path,
            count_mode,
            bins,
        } => {
            let mode = match count_mode {
                Mode::GroundTruth => CountMode::GroundTruth,
                Mode::Pseudo => CountMode::Pseudo,
            };
            let report = commands::metrics(&path, mode, bins as usize)?;
            emit(&(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage(&err) { 2 } else { 1 })
        }
    }
}
