//! poisonlab CLI: run experiment grids, sweep parameters, summarize
//! artifacts.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use poisonlab::{
    load_cells, run_experiment, summarize, sweep, write_artifacts, write_report, write_sweep,
    ExperimentConfig, SweepDimension,
};
use poisonlab_core::error::Error;

#[derive(Parser)]
#[command(name = "poisonlab", version, about = "LDP poisoning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment grid from a config file.
    Run {
        config: PathBuf,
    },
    /// Sweep one dimension and emit a plot-ready CSV.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        dim: String,
    },
    /// Summarize a directory of per-cell artifacts.
    Report {
        artifact_dir: PathBuf,
    },
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os("POISONLAB_OUTPUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone(),
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Parse { .. })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(&cfg);
            let run = run_experiment(&cfg)?;
            write_artifacts(&run, &dir)?;
            let summary = summarize(
                &run.cells.iter().map(|c| c.artifacts.clone()).collect::<Vec<_>>(),
            );
            write_report(&summary, &dir)?;
            println!(
                "{} cells ({} failed) -> {}",
                run.cells.len(),
                run.failed.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Sweep { config, dim } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dimension: SweepDimension = dim.parse()?;
            let dir = output_dir(&cfg);
            let csv = sweep(&cfg, dimension)?;
            let path = write_sweep(&csv, &dir, dimension)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Report { artifact_dir } => {
            let cells = load_cells(&artifact_dir)?;
            let summary = summarize(&cells);
            write_report(&summary, &artifact_dir)?;
            print!("{}", poisonlab::report::render_text(&summary));
            Ok(())
        }
    }
}
