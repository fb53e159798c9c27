use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: mismatched spaces, parameters out of range, malformed tables.
    #[error("domain error: {0}")]
    Domain(String),

    /// A log-sum-exp integral vanished at a grid point.
    #[error("degenerate mass: {side} integral vanishes at grid point {index} (coordinate {coord})")]
    DegenerateMass {
        side: &'static str,
        index: usize,
        coord: f64,
    },

    /// A matrix or scalar computation failed (non-SPD input, failed inversion, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An operation was called on an input that does not meet its precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
