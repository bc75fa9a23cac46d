//! Command-line driver for the kolmo experiments.

pub mod args;
pub mod commands;
pub mod config;

use anyhow::{Context, Result};

pub use args::{Cli, Command};
pub use commands::{cmd_cov_check, cmd_gci, cmd_lil, cmd_simulate, cmd_smallball, execute, load_config, Outcome};
pub use config::{ExperimentConfig, OutputFormat, RegimeArg, ValidationError};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "KOLMO_THREADS";

/// Worker count from `KOLMO_THREADS`, or `None` for the machine default.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(ValidationError {
                violations: vec![(THREADS_ENV.to_string(), format!("must be a positive integer, got {v:?}"))],
            }
            .into()),
        },
    }
}

/// Runs one command on a pool of the requested size.
pub fn run(cli: &Cli, threads: Option<usize>) -> Result<Outcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().context("cannot start worker threads")?;
    pool.install(|| execute(&cli.command))
}

/// Process exit code for a failed run: 2 for invalid input, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ValidationError>().is_some() {
        2
    } else {
        1
    }
}
