//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration file or key could not be parsed.
    #[error("configuration error: {0}")]
    Config(String),

    /// A linear system could not be factorized or solved.
    #[error("linear solve failed on slab {slab}: {message}")]
    Solve { slab: usize, message: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
