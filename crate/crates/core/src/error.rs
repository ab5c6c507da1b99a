//! Error taxonomy shared by every module. Variants map one-to-one onto the
//! CLI exit codes, so library callers and the binary agree on failure class.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or record handed to an operation.
    #[error("input: {0}")]
    Input(String),

    /// Configuration that fails validation (bad threshold, unknown key, ...).
    #[error("config: {0}")]
    Config(String),

    /// Operation invoked on an object in the wrong state (e.g. unfitted model).
    #[error("state: {0}")]
    State(String),

    /// Annotation backend unreachable or persistently invalid after retries.
    #[error("backend {backend_id}: {message}")]
    Backend { backend_id: String, message: String },

    /// Ratio whose denominator is empty by construction.
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    /// Optimizer produced a non-finite loss.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// On-disk artifact exists but cannot be parsed or fails its hash.
    #[error("corrupt artifact {path}: {message}")]
    CorruptArtifact { path: String, message: String },

    /// Refusing to overwrite existing artifacts without an explicit force.
    #[error("unsafe overwrite: {0}")]
    UnsafeOverwrite(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn backend(backend_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend {
            backend_id: backend_id.into(),
            message: message.into(),
        }
    }

    pub fn corrupt(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::CorruptArtifact {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 config/usage, 3 unsafe overwrite,
    /// 4 backend failure, 5 corrupt artifacts, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::UnsafeOverwrite(_) => 3,
            Error::Backend { .. } => 4,
            Error::CorruptArtifact { .. } => 5,
            _ => 1,
        }
    }
}
