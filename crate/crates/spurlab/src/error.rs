//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration violated its invariants (bad group sizes, negative
    /// variances, empty grids, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Mismatched dimensions between two objects that must agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A precondition of an operation does not hold for the given data
    /// (missing block layout, empty group, zero vector, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numerical routine failed in a way that is not a regular outcome
    /// (e.g. the margin QP could not reach its KKT tolerance even though
    /// the feasibility probe succeeded).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input file; carries the 1-based data row when known.
    #[error("parse error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Parse { row: Option<usize>, msg: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn parse_at(row: usize, msg: impl Into<String>) -> Self {
        Error::Parse { row: Some(row), msg: msg.into() }
    }
}
