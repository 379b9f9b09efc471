//! Failure classes and their process exit codes.

use std::fmt;

use sarcasm_core::augmentation::{AugmentError, TranslateError};
use sarcasm_core::dataset::DatasetError;
use sarcasm_core::layers::checkpoint::CheckpointError;
use sarcasm_core::layers::ModelError;
use sarcasm_core::training::TrainError;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_EXTERNAL: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    /// Bad flags, bad config, unreadable or malformed input.
    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self::new(EXIT_NUMERICAL, message)
    }

    pub fn external(message: impl Into<String>) -> Self {
        Self::new(EXIT_EXTERNAL, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(EXIT_INTERNAL, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::Params(_) => Self::usage(e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::NonFiniteLoss { .. } => Self::numerical(format!(
                "{e}; lower the learning rate or check the input data"
            )),
            TrainError::Config(_) | TrainError::EmptyData(_) | TrainError::Unlabeled { .. } => {
                Self::usage(e.to_string())
            }
        }
    }
}

impl From<TranslateError> for CliError {
    fn from(e: TranslateError) -> Self {
        match e {
            TranslateError::Config(_) | TranslateError::Unsupported(_) => Self::usage(e.to_string()),
            TranslateError::Service(_) | TranslateError::Decode(_) => Self::external(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Train(t) => t.into(),
            AugmentError::Model(m) => m.into(),
            AugmentError::AllTranslationsFailed { .. } => Self::external(format!(
                "{e}; pass --skip-backtranslation to continue without it"
            )),
            AugmentError::NonFinite(_) => Self::numerical(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}
