use std::path::PathBuf;

use imos::backend::BackendError;
use imos::dataset::{DatasetError, MaskIoError};
use imos::evaluation::EvalError;
use imos::thinking::LoopError;
use imos::training::checkpoint::CheckpointError;
use imos::training::fit::TrainError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// `segment` ran to completion without an accepted mask.
    pub const EXHAUSTED: u8 = 2;
    pub const USAGE: u8 = 10;
    pub const IO: u8 = 11;
    pub const BACKEND: u8 = 12;
    pub const DATA: u8 = 13;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    File(#[from] MaskIoError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => exit::USAGE,
            CliError::Io { .. } | CliError::File(_) | CliError::Checkpoint(_) => exit::IO,
            CliError::Dataset(DatasetError::Io { .. }) | CliError::Eval(EvalError::Mask(_)) => exit::IO,
            CliError::Loop(LoopError::InvalidConfig(_)) => exit::USAGE,
            CliError::Backend(_) | CliError::Loop(_) => exit::BACKEND,
            CliError::Eval(EvalError::Predictor { .. }) => exit::BACKEND,
            CliError::Eval(EvalError::EmptyDataset) => exit::USAGE,
            CliError::Train(TrainError::Segment(_)) => exit::BACKEND,
            CliError::Train(TrainError::InvalidConfig(_)) => exit::USAGE,
            CliError::Dataset(_) | CliError::Eval(_) | CliError::Train(_) => exit::DATA,
        }
    }
}

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
