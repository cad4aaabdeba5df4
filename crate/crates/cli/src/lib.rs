//! Experiment runner for the openkpz laboratory.
//!
//! Each subcommand maps to one [`Experiment`]. A run resolves a
//! [`RunConfig`], executes inside a fixed-size worker pool, writes its tables
//! as CSV, and reports named checks that decide the exit status.

pub mod config;
pub mod experiments;
pub mod output;

use openkpz_core::Error as CoreError;

pub use config::RunConfig;
pub use experiments::Experiment;
pub use output::{Check, Outcome, Table};

/// Process exit statuses.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DEGENERATE: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),

    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::Degenerate { .. })
            | CliError::Core(CoreError::NonFinite { .. })
            | CliError::Core(CoreError::Scheme(_))
            | CliError::Core(CoreError::Truncation { .. }) => exit::DEGENERATE,
            _ => exit::USAGE,
        }
    }
}

/// Runs `config.experiment` on `config.workers` threads. Results do not
/// depend on the worker count.
pub fn run_experiment(config: &RunConfig) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build()?;
    pool.install(|| experiments::dispatch(config))
}

/// Runs, writes every table under `config.out`, and returns the outcome.
pub fn run_and_write(config: &RunConfig) -> Result<Outcome, CliError> {
    let outcome = run_experiment(config)?;
    outcome.write_all(config)?;
    Ok(outcome)
}
