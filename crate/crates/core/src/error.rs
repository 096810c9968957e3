use std::path::PathBuf;

/// Errors raised by the pipeline, the neural engine and the co-learning loop.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch in {layer}: expected {expected}, got {got}")]
    Dimension {
        layer: String,
        expected: String,
        got: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("reference selection failed for class {class}: {reason}")]
    Selection { class: String, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("{} suggestion(s) still pending: {}", pending.len(), pending.join(", "))]
    Pending { pending: Vec<String> },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn dim(layer: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            layer: layer.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Whether the failure is a data/schema problem rather than a numeric one.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::NotFound(_)
                | Error::Input(_)
                | Error::Selection { .. }
        )
    }
}
