//! Experiment harness: seed-replayable replication batches over the
//! reciprocity network model, with CSV rows, Q-Q pair files, and JSON
//! summaries. The CLI in `main.rs` is a thin wrapper over [`experiment`].

pub mod experiment;
pub mod summary;

use thiserror::Error;

/// Harness-level errors, split by exit code: config problems exit 1,
/// I/O problems exit 2.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io(_) => 2,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        HarnessError::Io(format!("{}: {err}", path.display()))
    }

    /// JSON error with a line-numbered location.
    pub fn json(path: &std::path::Path, err: &serde_json::Error) -> Self {
        HarnessError::Config(format!(
            "{}:{}:{}: {err}",
            path.display(),
            err.line(),
            err.column()
        ))
    }
}

impl From<recipnet::Error> for HarnessError {
    fn from(e: recipnet::Error) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
