//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/grid shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A numerical routine failed (factorization, divergence, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A caller broke an API contract (wrong node kind, key mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training loss became NaN; carries enough context to reproduce.
    #[error("NaN loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NanLoss { epoch: usize, batch: usize, lr: f64 },

    /// Stored checksum does not match the payload that was read.
    #[error("checksum mismatch for {what}: manifest {expected}, payload {actual}")]
    Checksum {
        what: String,
        expected: String,
        actual: String,
    },

    /// File was written by an unsupported format version.
    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    /// Payload file is shorter than the manifest promises.
    #[error("truncated payload {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
