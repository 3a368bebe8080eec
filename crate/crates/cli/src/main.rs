//! `chtf`: tensor factorization, recognition and benchmark commands.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Flags;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "chtf", version, about = "Compositional hierarchical tensor factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Factorize a TNSR tensor into a model archive.
    Decompose,
    /// Generate a seeded synthetic ensemble with planted factors.
    Synth,
    /// Train a recognition model on a labeled ensemble.
    Train,
    /// Write part-based signatures of observations.
    Project,
    /// Score pairs of signatures and sweep thresholds.
    Verify,
    /// Run the occlusion benchmark.
    Bench,
}

/// Caps worker threads when `CHTF_THREADS` is set.
fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CHTF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CHTF_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let flags = cli.flags.merge_config()?;
    match cli.command {
        Command::Decompose => commands::decompose(&flags),
        Command::Synth => commands::synth(&flags),
        Command::Train => commands::train(&flags),
        Command::Project => commands::project(&flags),
        Command::Verify => commands::verify(&flags),
        Command::Bench => commands::bench(&flags),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
