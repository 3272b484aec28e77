use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INVALID_INPUT: i32 = 2;
    pub const SOLVE_FAILED: i32 = 3;
    pub const IO: i32 = 4;
    pub const CHECK_FAILED: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("solve failed: {0}")]
    Solve(covsteer::Error),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} check(s) above tolerance")]
    ChecksFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => exit::INVALID_INPUT,
            CliError::Solve(_) => exit::SOLVE_FAILED,
            CliError::Io { .. } => exit::IO,
            CliError::ChecksFailed { .. } => exit::CHECK_FAILED,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// An error raised while reading an input file.
    pub(crate) fn load(path: &std::path::Path, e: covsteer::Error) -> Self {
        match e {
            covsteer::Error::Io(source) => CliError::io(path, source),
            other => CliError::Invalid(format!("{}: {other}", path.display())),
        }
    }

    /// An error raised by the pipeline once the input has been accepted.
    pub(crate) fn solve(e: covsteer::Error) -> Self {
        match e {
            covsteer::Error::InvalidProblem(_) => CliError::Invalid(e.to_string()),
            other => CliError::Solve(other),
        }
    }
}
