use std::process::ExitCode;

use retina_kit::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Pipeline(_) => 3,
        })
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Sorts core errors by where they arose: file access is always I/O, the rest
/// falls to the stage given by the call site.
pub trait Classify<T> {
    /// Failure while reading inputs or options.
    fn usage(self) -> CliResult<T>;
    /// Failure inside a processing stage.
    fn stage(self) -> CliResult<T>;
}

impl<T> Classify<T> for Result<T, CoreError> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|e| match e {
            CoreError::Io { .. } | CoreError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        })
    }

    fn stage(self) -> CliResult<T> {
        self.map_err(|e| match e {
            CoreError::Io { .. } | CoreError::Format { .. } => CliError::Io(e.to_string()),
            _ => CliError::Pipeline(e.to_string()),
        })
    }
}
