use sparse_gp::GpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("I/O: {0}")]
    Io(String),
    #[error("column {column} not found in {path}")]
    MissingColumn { column: String, path: String },
    #[error("line {line}, column {column}: not a finite number: {value:?}")]
    BadCell { line: usize, column: String, value: String },
    #[error("column {0} has zero variance on the training split")]
    ZeroVariance(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] GpError),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
