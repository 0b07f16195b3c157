use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{field} = {value} is out of range (must be < {limit})")]
    Range {
        field: &'static str,
        value: u64,
        limit: u64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("timestamp {current} follows {previous}: events must be non-decreasing in time")]
    Ordering { previous: u64, current: u64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported file version {0}")]
    Version(u8),

    #[error("truncated record at byte offset {offset} ({available} of {expected} bytes)")]
    Truncated {
        offset: u64,
        available: usize,
        expected: usize,
    },

    #[error("parse error in column {column}: {reason}")]
    Parse { column: usize, reason: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("stage {index} failed: {cause}")]
    Stage { index: usize, cause: StageError },

    #[error("sink failed: {0}")]
    Sink(String),

    #[error("incomplete benchmark cells: {}", .missing.join(", "))]
    Aggregation { missing: Vec<String> },

    #[error("checksum mismatch in cell {cell}: expected {expected}, got {actual}")]
    ChecksumMismatch { cell: String, expected: u64, actual: u64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure raised by a pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct StageError(pub String);

impl StageError {
    pub fn new(msg: impl Into<String>) -> Self {
        StageError(msg.into())
    }
}
