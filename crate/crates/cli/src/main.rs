//! `simcom` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simcom::error::ErrorKind;

#[derive(Debug, Parser)]
#[command(name = "simcom", version, about = "Just-in-time defect prediction with model fusion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, or output file for single-table commands.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// JSON-lines commit stream.
    #[arg(long, global = true, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Bundle manifest (`bundle.json`) written by a run.
    #[arg(long, global = true, value_name = "PATH")]
    bundle: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic commit stream.
    Synthesize,
    /// Compute the fourteen expert features for every commit in a stream.
    ExtractFeatures,
    /// Run the pipeline and report the trained checkpoints and bundle.
    Train,
    /// Run the pipeline and print the fusion sweep log.
    Sweep,
    /// Score a labelled stream with a saved bundle, or run the pipeline and
    /// print its test metrics.
    Evaluate,
    /// Score a commit stream with a saved bundle.
    Predict,
    /// Explain the simple model's score for one commit.
    Explain {
        #[arg(long, value_name = "ID")]
        commit: String,
    },
    /// Re-run the pipeline with the largest commits removed.
    DropExperiment {
        /// Comma-separated fractions; defaults to the configured list, or
        /// 0,0.1,0.2,0.3,0.4 when that is empty.
        #[arg(long, value_delimiter = ',', value_name = "RATES")]
        rates: Vec<f64>,
    },
    /// Run the whole pipeline.
    Run,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Training => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli.command, cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
