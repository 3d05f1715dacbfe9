use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("degenerate intensity range")]
    DegenerateRange,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("log scale undefined: image maximum is zero")]
    LogScaleUndefined,
    #[error("{0} is non-invertible in this artifact")]
    NonInvertible(&'static str),
    #[error("{op}: shape mismatch {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss term `{term}` at step {step}")]
    NonFiniteLoss { term: &'static str, step: usize },
    #[error("insufficient variance: {0}")]
    InsufficientVariance(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{path}: {cause}")]
    Decode { path: PathBuf, cause: image::ImageError },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), cause: source }
    }
}
