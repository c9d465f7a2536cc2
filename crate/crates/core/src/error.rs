use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}: {detail}")]
    NonFinite { op: &'static str, detail: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("parameter '{0}' has no gradient (was backward called?)")]
    MissingGradient(String),

    #[error("weight normalization: output channel {0} has zero norm")]
    ZeroNormChannel(usize),

    #[error("image error for '{path}': {detail}")]
    Image { path: String, detail: String },

    #[error("checkpoint error for '{path}': {detail}")]
    Checkpoint { path: String, detail: String },

    #[error("checkpoint fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    #[error("io error for '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        CoreError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
