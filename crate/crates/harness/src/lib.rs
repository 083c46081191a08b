//! Experiment harness: configuration, training, evaluation, comparison,
//! ablations, checkpoints, and canonical report emission.

use thiserror::Error;

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod evaluate;
pub mod model;
pub mod report;
pub mod train;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error(transparent)]
    Data(#[from] avvp_core::data::DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// CLI exit code: 2 for user-input problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Data(avvp_core::data::DataError::InvalidConfig(_)) => 2,
            HarnessError::Json(_) => 2,
            _ => 1,
        }
    }
}
