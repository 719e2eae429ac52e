use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("geometry error: input size n={n} must exceed max(h, w)={max_hw}")]
    Geometry { n: usize, max_hw: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("explicit Jacobian would have {entries} entries (cap {cap}); use a matrix-free method")]
    SizeCap { entries: u128, cap: u128 },

    #[error("power iteration did not converge after {iterations} iterations (sigma={sigma}, residual={residual})")]
    NotConverged {
        sigma: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("spectral estimate for branch {} did not converge (residual {})", .report.argmin, .report.estimate(.report.argmin).residual)]
    GradientNotConverged {
        report: Box<crate::bounds::BoundReport>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
