use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },
}

impl CoreError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::ShapeMismatch { op, detail: detail.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        CoreError::Format { path: path.into(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
