//! Config-driven front end for ensemble discrimination and classification
//! experiments.
//!
//! A run reads one `.cfg` (TOML) file, validates it completely, executes the
//! requested mode and writes its artifacts plus a `manifest.json` with the
//! SHA-256 of every file. Nothing is written when validation or the run
//! fails.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{Experiment, ExperimentConfig, Mode, Overrides};
pub use error::CliError;
pub use run::{execute, OutputBundle, RunReport};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "qec",
    version,
    about = "Learning control for quantum ensemble classification"
)]
pub struct Cli {
    /// Experiment description (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Overrides `eval.seed`.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Loads and validates the config named by `cli` without running it.
pub fn prepare(cli: &Cli) -> Result<Experiment, CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::Config {
            key: "--threads".into(),
            message: "must be at least 1".into(),
        });
    }
    let config = ExperimentConfig::load(&cli.config)?;
    config.resolve(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    })
}

/// Runs `exp` on a pool of `threads` workers (all cores when `None`).
pub fn execute_with_threads(exp: &Experiment, threads: Option<usize>) -> Result<OutputBundle, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config {
            key: "--threads".into(),
            message: e.to_string(),
        })?;
    pool.install(|| execute(exp))
}

/// Validates, runs and writes one experiment.
pub fn run(cli: &Cli) -> Result<OutputBundle, CliError> {
    let exp = prepare(cli)?;
    let bundle = execute_with_threads(&exp, cli.threads)?;
    bundle.write()?;
    Ok(bundle)
}
