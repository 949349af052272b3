use std::path::PathBuf;

use dsdr_core::SdrError;
use dsdr_protocol::ProtocolError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

/// Problems reading an external CSV dataset. Line numbers are 1-based and
/// count the header.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("parse error at line {line}, column {column}: {reason}")]
    ParseError { line: u64, column: usize, reason: String },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("non-numeric cell `{value}` at line {line}, column {column}")]
    NonNumericCell { line: u64, column: usize, value: String },

    #[error("predictor `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error("malformed results file: {0}")]
    Results(String),

    #[error(transparent)]
    Core(#[from] SdrError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("point needs {cells} cells, budget is {budget}")]
    BudgetExceeded { cells: u64, budget: u64 },

    #[error("all {0} repetitions failed")]
    AllRepetitionsFailed(usize),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Ingest(_) => 2,
            BenchError::AllRepetitionsFailed(_) => 3,
            _ => 1,
        }
    }
}
