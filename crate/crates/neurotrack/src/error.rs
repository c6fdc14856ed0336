use thiserror::Error;

use neurotrack_core::pipeline::PipelineError;

use crate::formats::FormatError;

/// Top-level failure, split by exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Stage(#[from] PipelineError),
    #[error("{0}")]
    Format(#[from] FormatError),
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            _ => 3,
        }
    }
}
