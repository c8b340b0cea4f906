use std::path::PathBuf;

use axisym_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Configuration or command-line input that fails validation. The
    /// message names the offending key.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A member of a sweep failed; the other members' outputs are kept.
    #[error("sweep member nu={nu} failed: {source}")]
    SweepMember {
        nu: f64,
        #[source]
        source: Box<LabError>,
    },
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Io { .. } | LabError::Format { .. } => 1,
            LabError::Core(e) => match e {
                CoreError::InvalidArgument(_) | CoreError::GridMismatch(_) => 1,
                CoreError::NotConverged(_) | CoreError::NonFinite { .. } | CoreError::InsufficientSpan(_) => 2,
            },
            LabError::SweepMember { source, .. } => source.exit_code(),
        }
    }
}
