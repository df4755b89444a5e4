use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semiclassical::config::{validate_config, Overrides};
use semiclassical::runner;

#[derive(Parser)]
#[command(
    version,
    about = "Chain Monte Carlo for a classical field coupled to a quantum system, with an exact Fock-space reference"
)]
struct Cli {
    /// Directory for the CSV table, manifest and checkpoints (overrides the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration from t = 0.
    Run {
        config: PathBuf,
        /// Checkpoint and stop after this many records.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Continue an interrupted run from its checkpoint.
    Resume {
        checkpoint: PathBuf,
        /// Checkpoint and stop once this many records (counted from t = 0) exist.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Check a configuration and print the resolved version.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
    };
    let result = match cli.command {
        Command::Run { config, stop_after } => runner::run_file(&config, &overrides, stop_after)
            .map(|s| {
                log::info!(
                    "finished: {} records to t = {}, {} reformats; output in {}",
                    s.records,
                    s.final_time,
                    s.reformats,
                    s.out_dir.display()
                );
            }),
        Command::Resume {
            checkpoint,
            stop_after,
        } => {
            if cli.seed.is_some() {
                log::warn!(
                    "--seed is ignored on resume; the checkpoint carries the generator state"
                );
            }
            runner::resume(&checkpoint, cli.out_dir, stop_after).map(|s| {
                log::info!(
                    "finished: {} records to t = {}; output in {}",
                    s.records,
                    s.final_time,
                    s.out_dir.display()
                );
            })
        }
        Command::Validate { config } => std::fs::read_to_string(&config)
            .map_err(|source| runner::RunError::Io {
                path: config.clone(),
                source,
            })
            .and_then(|raw| validate_config(&raw, &overrides).map_err(Into::into))
            .map(|cfg| print!("{}", cfg.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
