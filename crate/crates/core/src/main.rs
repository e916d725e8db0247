//! Command-line front end: `phasepop run <config> [--out <dir>] [--quiet]`.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad config, violated
//! model assumptions), 2 on numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phasepop::config::{parse_config, Task};
use phasepop::runner::{emit_plot_script, run};
use phasepop::Error;

#[derive(Parser)]
#[command(
    name = "phasepop",
    about = "Numerical laboratory for a size-structured two-phase population model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the task described by a TOML config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Output directory for CSV files (created if missing).
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Suppress the one-line summary.
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, quiet } => match run_command(&config, &out, quiet) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}

fn run_command(config_path: &Path, out_dir: &Path, quiet: bool) -> Result<(), Error> {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let config = parse_config(&text)?;
    let mut report = run(&config, out_dir)?;
    if matches!(
        config.task,
        Task::Simulate | Task::Aeg | Task::Spectral | Task::RankN
    ) {
        let script = emit_plot_script(&report)?;
        report.files.push(script);
    }
    if !quiet {
        println!("{}", report.summary_line());
    }
    Ok(())
}
