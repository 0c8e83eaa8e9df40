use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Errors surfaced by the command-line tool, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{path}: parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl CliError {
    /// 0 success, 2 validation, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) | Self::Parse { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } | Self::Format { .. } => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Prefixes a validation or numerical message with the context it came from.
    pub fn context(self, what: &str) -> Self {
        match self {
            Self::Validation(m) => Self::Validation(format!("{what}: {m}")),
            Self::Numerical(m) => Self::Numerical(format!("{what}: {m}")),
            other => other,
        }
    }
}

impl From<tpe_core::Error> for CliError {
    fn from(e: tpe_core::Error) -> Self {
        use tpe_core::Error as E;
        match e {
            E::DegenerateChannel { .. } | E::IllPosedFit { .. } | E::Diverged { .. } => Self::Numerical(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}
