use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] tglab_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{failed} of {total} realizations failed at L = {length}; first error: {first}")]
    Aborted {
        length: usize,
        failed: usize,
        total: usize,
        first: String,
        invariant: bool,
    },
    #[error("report: {0}")]
    Report(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numeric-invariant violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(tglab_core::Error::Config(_)) => 2,
            HarnessError::Invariant(_) | HarnessError::Core(tglab_core::Error::Invariant(_)) => 3,
            HarnessError::Aborted { invariant: true, .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
