//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the analysis pipeline and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The acceptance normalization is zero: no round can produce a key bit.
    #[error("no accepted rounds (normalization is zero)")]
    NoAcceptedRounds,

    /// A normalization constant that must be positive was not.
    #[error("invalid normalization N = {0}")]
    InvalidNormalization(f64),

    /// An entropy term with zero total norm cannot yield a lambda value.
    #[error("degenerate entropy term (zero total norm)")]
    DegenerateTerm,

    /// An empirical estimate was requested from an empty conditioning cell.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A constructor was called with a parameter it does not support.
    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    /// Random orthonormalization kept hitting near-linear dependence.
    #[error("degenerate random sample after {0} retries")]
    DegenerateSample(usize),

    /// Attack specification file could not be parsed.
    #[error("attack spec parse error: {0}")]
    Parse(#[from] serde_json::Error),
}
