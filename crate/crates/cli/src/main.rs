//! `skewld`: data generation, sampling runs, exact oracles, diagnostics and
//! parameter sweeps driven by a JSON experiment config.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 a run diverged
//! (partial outputs are kept), 4 I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skewld::Error;

use commands::Completion;
use config::ExperimentConfig;

const EXIT_INVALID: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "skewld",
    version,
    about = "Skew-drift stochastic gradient Langevin experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from `data.generate`; `--seed` replaces the recipe seed.
    GenerateData(CommonArgs),
    /// Run the sampler; `--seed` replaces `run.seed`.
    Run(CommonArgs),
    /// Evaluate the exact posterior on `grid`; `--seed` replaces the data recipe seed.
    Oracle(CommonArgs),
    /// Compare a trace with an oracle and write `report.json`.
    Diagnose(CommonArgs),
    /// Sweep `compare.gammas` × `compare.seeds` and summarize.
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &CommonArgs) -> skewld::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(command: Command) -> skewld::Result<Completion> {
    match command {
        Command::GenerateData(a) => {
            let mut cfg = load(&a)?;
            if let Some(s) = a.seed {
                cfg.override_data_seed(s)?;
            }
            commands::generate_data(&cfg)
        }
        Command::Run(a) => {
            let mut cfg = load(&a)?;
            if let Some(s) = a.seed {
                cfg.override_run_seed(s)?;
            }
            commands::run(&cfg)
        }
        Command::Oracle(a) => {
            let mut cfg = load(&a)?;
            if let Some(s) = a.seed {
                cfg.override_data_seed(s)?;
            }
            commands::oracle(&cfg)
        }
        Command::Diagnose(a) => {
            if a.seed.is_some() {
                return Err(Error::Config("diagnose does not take --seed".into()));
            }
            commands::diagnose(&load(&a)?)
        }
        Command::Compare(a) => {
            if a.seed.is_some() {
                return Err(Error::Config(
                    "compare takes its seeds from `compare.seeds`".into(),
                ));
            }
            commands::compare(&load(&a)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Completion::Done) => ExitCode::SUCCESS,
        Ok(Completion::Diverged) => {
            eprintln!("skewld: run diverged; partial trace written");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(e) => {
            eprintln!("skewld: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_INVALID,
            })
        }
    }
}
