//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, estimators, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched or out-of-range dimensions (qubit counts, vector lengths).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation that needs at least one (or two) observations got none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A denominator or system matrix is zero or numerically singular.
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    /// The likelihood carries no information about the parameter.
    #[error("flat likelihood: {0}")]
    FlatLikelihood(String),

    /// An iterative solver failed to converge within its iteration budget.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Rejection sampling cannot or did not accept any draw.
    #[error("no acceptance: {0}")]
    NoAcceptance(String),

    /// Cell merging left fewer than two cells for a chi-square test.
    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),

    /// File I/O failure, with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A file did not match its expected format.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
