use thiserror::Error;

use crate::automaton::ValidationReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid partition: {0}")]
    PartitionInvalid(String),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("step size error: {0}")]
    StepSize(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state diverged at grid index {index} (t = {t})")]
    Divergence { index: usize, t: f64 },

    #[error("automaton failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("out of range: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;
