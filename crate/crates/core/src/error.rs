use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the banding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("image decode failed: {0}")]
    Decode(String),

    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model container checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("unknown model container version {0}")]
    Version(u32),

    #[error("model container is malformed: {0}")]
    Format(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from the numerics rather than from the
    /// caller's inputs (diverging training, non-finite arithmetic).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Diverged(_) | Error::Degenerate(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
