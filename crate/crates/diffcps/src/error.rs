use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, out-of-range hyperparameters,
    /// empty datasets and the like. Detected before any work starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a way its contract forbids (index out of
    /// range, empty batch, zero sample count).
    #[error("usage error: {0}")]
    Usage(String),

    /// A data file could not be parsed. `record` is the 1-based index of the
    /// offending transition (0 for the header).
    #[error("parse error in {path} (record {record}): {msg}")]
    Parse {
        path: PathBuf,
        record: usize,
        msg: String,
    },

    /// A checkpoint file is malformed or does not match the requested
    /// architecture.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
