use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty distribution")]
    Empty,

    #[error("entry {index} is negative or not finite: {value}")]
    InvalidEntry { index: usize, value: f64 },

    #[error("distribution does not sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rows have unequal lengths")]
    RaggedRows,

    #[error("p places mass {p} at index {index} where q has none")]
    AbsoluteContinuityViolation { index: usize, p: f64 },

    #[error("row {row} has zero total mass")]
    ZeroRow { row: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("IB fixed point did not converge at beta = {beta} after {rounds} rounds")]
    NonConvergence { beta: f64, rounds: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
