use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PanError {
    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("length mismatch in {op}: expected {expected}, got {actual}")]
    Length {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for {len} items")]
    Index { index: usize, len: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },

    #[error("inconsistent bundle: {0}")]
    Consistency(String),

    #[error("training aborted at epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<PanError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl PanError {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        PanError::Dimension {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        PanError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PanError::Io {
            path: path.into(),
            source,
        }
    }
}
