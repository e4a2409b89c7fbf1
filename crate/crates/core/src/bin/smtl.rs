//! Experiment CLI: `run` a config grid, `diagnose` a completed run directory,
//! or re-`render` result tables. Exit codes: 0 success, 1 config error,
//! 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smtl_core::harness::{diagnostics, runner};
use smtl_core::Result;

#[derive(Parser)]
#[command(name = "smtl", version, about = "Semantic multi-task learning experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment grid described by a JSON config file.
    Run {
        /// Path to the experiment config (one JSON document).
        config: PathBuf,
    },
    /// Recompute divergence diagnostics for one completed run directory.
    Diagnose {
        /// Path to a run directory under `<output>/runs/`.
        run_dir: PathBuf,
    },
    /// Rebuild the result tables from a results directory's stored runs.
    Render {
        /// Experiment output directory (the one containing `runs/`).
        results_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version print to stdout and succeed; usage errors are
            // config-class failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let table = runner::run_experiment(&config)?;
            emit(&table.render_markdown())
        }
        Command::Diagnose { run_dir } => {
            let report = diagnostics::diagnostics(&run_dir)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&report)?))
        }
        Command::Render { results_dir } => {
            let (_, markdown) = runner::render_results(&results_dir)?;
            emit(&markdown)
        }
    }
}

/// Prints to stdout, treating a closed pipe as a clean stop.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}
