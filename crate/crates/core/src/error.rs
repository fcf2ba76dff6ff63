//! Error type shared across the library.
//!
//! `Shape`/`Invalid` flag caller mistakes that are recoverable at the API
//! boundary (bad dimensions, out-of-range knobs), `Format` covers anything
//! wrong with an on-disk artifact, and `Numeric` is reserved for NaN/Inf
//! blow-ups detected mid-computation — the CLI maps it to its own exit code.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument for {op}: {detail}")]
    Invalid { op: &'static str, detail: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid { op, detail: detail.into() }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }

    pub fn numeric(detail: impl Into<String>) -> Self {
        Error::Numeric(detail.into())
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.as_ref().to_path_buf(), reason: reason.into() }
    }
}
