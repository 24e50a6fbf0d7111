use thiserror::Error;

use crate::report::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game:\n{0}")]
    InvalidGame(ValidationReport),

    #[error("invalid schedule:\n{0}")]
    InvalidSchedule(ValidationReport),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix game has a non-finite entry at ({row}, {col})")]
    NonFinitePayoff { row: usize, col: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("rejection sampling gave up after {0} attempts")]
    RejectionLimit(usize),

    #[error("threshold search exceeded the cap of {0} visits")]
    ThresholdCap(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
