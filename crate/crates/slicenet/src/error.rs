use std::path::PathBuf;

use slicenet_core::Error as CoreError;

/// Failure of a harness operation, grouped by the category reported through
/// the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        HarnessError::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) | HarnessError::Core(CoreError::Config(_)) => "config",
            HarnessError::Io { .. } | HarnessError::Csv { .. } => "io",
            HarnessError::Dependency(_)
            | HarnessError::Core(CoreError::Decode(_) | CoreError::Incompatible(_)) => "dependency",
            HarnessError::Numeric(_)
            | HarnessError::Core(CoreError::Numeric(_) | CoreError::NonFiniteGradient { .. }) => "numeric",
            HarnessError::Core(_) => "internal",
        }
    }

    /// Process exit code of the error's category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "dependency" => 4,
            "numeric" => 5,
            _ => 1,
        }
    }
}
