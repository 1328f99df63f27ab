//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed in a bad value (non-finite input, dimension
    /// mismatch, out-of-range index).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An operation was called in a state where it is undefined
    /// (empty window, stepping a stopped detector).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A numerical procedure failed to converge or produced a
    /// non-finite result.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
