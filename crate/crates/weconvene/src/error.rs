use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("{path}: {source}")]
    IoError {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    ImageFormat { path: PathBuf, msg: String },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported version {0}")]
    VersionUnsupported(u8),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("corrupt blob: {0}")]
    CorruptBlob(String),
    #[error("invalid manifest index: {0}")]
    BadIndex(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Core(#[from] weconvene_core::Error),
}

impl CodecError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CodecError::IoError {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decoding(msg: impl Into<String>) -> Self {
        CodecError::Core(weconvene_core::Error::DecodingError(msg.into()))
    }

    /// The wrapped core error, if any.
    pub fn core(&self) -> Option<&weconvene_core::Error> {
        match self {
            CodecError::Core(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_decoding_error(&self) -> bool {
        matches!(self, CodecError::Core(weconvene_core::Error::DecodingError(_)))
    }
}
