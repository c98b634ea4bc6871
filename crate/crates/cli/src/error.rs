use std::io;
use std::path::{Path, PathBuf};

use ocpc_core::metrics::MetricsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("runs were made on different logs ({base} vs {test})")]
    ManifestMismatch { base: String, test: String },
    #[error(transparent)]
    Metric(#[from] MetricsError),
}

impl CliError {
    /// Process exit status, one per error class. Usage errors from the
    /// argument parser exit with 2 as well.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::InvalidSpec(_) | CliError::Data { .. } => 4,
            CliError::ManifestMismatch { .. } => 5,
            CliError::Metric(_) => 6,
        }
    }

    pub fn data(path: &Path, message: impl ToString) -> Self {
        CliError::Data { path: path.to_owned(), message: message.to_string() }
    }
}

pub trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io { path: path.to_owned(), source })
    }
}
