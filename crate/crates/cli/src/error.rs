use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    /// `row` is the 1-based line number in the file (the header is line 1).
    #[error("parse error at line {row}: {message}")]
    Parse { row: u64, message: String },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("invalid spec at {field}: {message}")]
    SpecValidation { field: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rdss_core::RdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
