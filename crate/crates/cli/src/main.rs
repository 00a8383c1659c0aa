use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Parser, Subcommand};
use moon_cli::config::RunConfig;
use moon_cli::{runner, CliError};

/// Unknown-aware sparse training harness.
#[derive(Parser)]
#[command(name = "moon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints, the epoch log, and a config echo.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score ID/OOD sets with the configured detectors and write the report.
    EvalOod {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Proceed on a checkpoint/config digest mismatch (warn only).
        #[arg(long)]
        force: bool,
    },
    /// Train paired cross-entropy/unknown-aware models on a two-component
    /// mixture and write the reliability probe report.
    TheorySim {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export penultimate-layer features of a dataset split as CSV.
    ExportFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        /// Config file holding the dataset.* keys and seed.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<(), CliError> {
    moon_core::exec::init_from_env();
    match Cli::parse().command {
        Command::Train { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let logs = runner::run_train(&cfg, &out)?;
            eprintln!(
                "trained {} epochs; final val acc {:.4}",
                logs.len(),
                logs.last().map(|l| l.val_accuracy).unwrap_or(0.0)
            );
            Ok(())
        }
        Command::EvalOod {
            ckpt,
            config,
            out,
            force,
        } => {
            let cfg = RunConfig::load(&config)?;
            let rows = runner::run_eval_ood(&cfg, &ckpt, &out, force)?;
            eprintln!(
                "evaluated {} detector/set pairs; id acc {:.4}, ece {:.4}",
                rows.detector_rows.len(),
                rows.id_accuracy,
                rows.id_ece
            );
            Ok(())
        }
        Command::TheorySim { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let rows = runner::run_theory_sim(&cfg, &out)?;
            eprintln!(
                "theory probes: {} hard-id seed blocks, {} ood rows",
                rows.hard_id.len(),
                rows.ood.len()
            );
            Ok(())
        }
        Command::ExportFeatures { ckpt, data, out } => {
            let cfg = RunConfig::load(&data)?;
            let n = runner::run_export_features(&ckpt, &cfg, &out)?;
            eprintln!("exported {} feature rows", n);
            Ok(())
        }
    }
}

fn main() -> ProcessExit {
    match run() {
        Ok(()) => ProcessExit::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ProcessExit::from(err.code as u8)
        }
    }
}
