use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] eoplab_core::Error),
}

impl CliError {
    pub fn parse(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Parse { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    /// 3 for resource budget errors, 2 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(eoplab_core::Error::Resource(_)) => crate::EXIT_RESOURCE,
            _ => crate::EXIT_INPUT,
        }
    }
}
