//! Error type shared by every analysis module.

use crate::fitting::StudentTFit;

/// Errors produced by ingestion, estimation, and fitting routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated (bad horizon, empty range, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input bytes could not be ingested (malformed rows beyond tolerance, empty result, ...).
    #[error("ingestion failed: {0}")]
    Ingestion(String),

    /// The input data is degenerate for the requested operation (constant series, zero volatility).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A scaling fit produced a slope with no meaningful stability-index interpretation.
    #[error("invalid scaling: {0}")]
    InvalidScaling(String),

    /// An iterative fit ran out of budget; the best iterate found so far is attached.
    #[error("fit did not converge: {message}")]
    NonConvergence {
        message: String,
        best: Box<StudentTFit>,
    },

    /// A generated value left the representable range (price path overflow, ...).
    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
