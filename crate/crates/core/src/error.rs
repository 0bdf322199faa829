//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("{path}:{line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: String,
        line: u64,
        timestamp: String,
    },

    #[error("{path}:{line}: timestamps not strictly increasing at {timestamp}")]
    NonMonotonicTimestamps {
        path: String,
        line: u64,
        timestamp: String,
    },

    #[error("{path}: gaps in series: {ranges}")]
    Gaps { path: String, ranges: String },

    #[error("infeasible battery action: {0}")]
    InfeasibleAction(String),

    #[error("infeasible dispatch problem: {0}")]
    Infeasible(String),

    #[error("horizon {steps} exceeds brute-force limit of {max} steps")]
    HorizonTooLarge { steps: usize, max: usize },

    #[error("insufficient history: need {needed}, got {got}")]
    InsufficientHistory { needed: String, got: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad or missing input data rather than an
    /// unsolvable problem.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DuplicateTimestamp { .. }
                | Error::NonMonotonicTimestamps { .. }
                | Error::Gaps { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    /// True when a dispatch problem has no feasible solution.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Infeasible(_) | Error::InfeasibleAction(_)
        )
    }
}
