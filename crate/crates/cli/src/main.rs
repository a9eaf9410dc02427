use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dissipnet_core::benchmarks::SignalKind;

mod commands;

use commands::CliError;

/// Train and audit dissipativity-constrained neural dynamical systems.
#[derive(Debug, Parser)]
#[command(name = "dissipnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a benchmark system and write a dataset directory.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Input signal family, overriding `data.signal`.
        #[arg(long)]
        signal: Option<SignalKind>,
        /// Steps per trajectory, overriding the configured horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Train a projected model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Resume from this checkpoint instead of a fresh model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Report RMSE and RMSE(t) of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate on freshly simulated inputs of this kind instead of the test split.
        #[arg(long)]
        signal: Option<SignalKind>,
        /// Steps of the fresh evaluation inputs, e.g. 1000 for a long-step run.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Audit a checkpoint against its certificate.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            common,
            signal,
            horizon,
        } => {
            let ctx = commands::Context::load(common.config, common.seed)?;
            commands::generate(&ctx, common.out, signal, horizon)
        }
        Command::Train {
            common,
            dataset,
            checkpoint,
        } => {
            let ctx = commands::Context::load(common.config, common.seed)?;
            commands::train(&ctx, dataset, checkpoint, common.out)
        }
        Command::Eval {
            common,
            dataset,
            checkpoint,
            signal,
            horizon,
        } => {
            let ctx = commands::Context::load(common.config, common.seed)?;
            commands::eval(&ctx, dataset, checkpoint, common.out, signal, horizon)
        }
        Command::Verify { common, checkpoint } => {
            let ctx = commands::Context::load(common.config, common.seed)?;
            commands::verify(&ctx, checkpoint, common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // bad arguments are a configuration problem, not a failed audit
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
