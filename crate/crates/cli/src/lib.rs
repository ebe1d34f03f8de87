pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod validate;

pub use config::{OutputFormat, RunConfig, TestSource};
pub use error::{CliError, CliResult};

pub const THREADS_ENV: &str = "QKRR_THREADS";

/// Caps the worker pool from `QKRR_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}
