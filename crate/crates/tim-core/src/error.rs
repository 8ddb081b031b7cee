//! Error type shared across the crate.
//!
//! Variants are grouped by how callers should react: [`Error::Validation`]
//! and [`Error::Schema`] mean the input was malformed, [`Error::Degenerate`]
//! means the input parsed but cannot support the requested computation
//! (e.g. no control units), and [`Error::Internal`] flags a broken invariant
//! that indicates a bug rather than bad input.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input schema is malformed: unknown role, duplicate column, missing
    /// required column, or a header/width mismatch.
    #[error("schema error: {0}")]
    Schema(String),

    /// A value or parameter is out of range for its declared role.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input parsed cleanly but is degenerate for the requested operation
    /// (no treated units, no controls, fewer than two rows, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// An internal invariant was violated; this is a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code for this error class (0 is success):
    /// 2 = invalid input, 3 = degenerate data, 4 = internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Validation(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 2,
            Error::Degenerate(_) => 3,
            Error::Internal(_) => 4,
        }
    }
}
