use std::io;
use std::path::Path;

use radcom_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// JSON that does not parse or does not match the schema.
    #[error("{path}:{line}:{column}: {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    /// Well-formed input with invalid content.
    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    /// Failure inside the processing chain.
    #[error("pipeline error [{stage}]: {source}")]
    Pipeline {
        stage: String,
        #[source]
        source: CoreError,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline { .. } => 3,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn input(path: &Path, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            message: message.into(),
        }
    }

    pub fn schema(path: &Path, e: &serde_json::Error) -> Self {
        // serde_json appends " at line L column C"; strip it since we print both.
        let text = e.to_string();
        let message = match text.rfind(" at line ") {
            Some(i) => text[..i].to_string(),
            None => text,
        };
        CliError::Schema {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message,
        }
    }

    /// Classifies a core error: configuration and scenario problems are input
    /// errors, everything else is a pipeline failure tagged with its stage.
    pub fn from_core(path: &Path, fallback_stage: &str, e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::Scenario(_) | CoreError::Capacity { .. } => {
                CliError::input(path, e.to_string())
            }
            CoreError::Stage { stage, source } => CliError::Pipeline {
                stage: stage.to_string(),
                source: *source,
            },
            e => CliError::Pipeline {
                stage: fallback_stage.to_string(),
                source: e,
            },
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            CliError::Pipeline { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
