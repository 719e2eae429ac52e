//! Library half of the `convbound` command-line tool.
//!
//! Exit codes: 0 success, 1 numerical non-convergence, 2 input error,
//! 3 explicit-Jacobian size cap.

pub mod bench;
pub mod commands;
pub mod compare;
pub mod error;
pub mod manifest;
pub mod num;

pub use error::{CliError, CliResult};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "CONVBOUND_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A second initialization is harmless; the first pool stays.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
