use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed container header in {}: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("malformed manifest {}: {reason}", path.display())]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: String,
        row: usize,
        col: usize,
    },

    #[error("downbeat not on beat grid: downbeat at {time:.4}s matches no beat")]
    DownbeatNotOnGrid { time: f64 },

    #[error("invalid beat grid: {0}")]
    InvalidGrid(String),

    #[error("invalid feature matrix `{name}`: {reason}")]
    InvalidFeature { name: String, reason: String },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("wav error on {}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid transition {exit}->{entry}: {reason}")]
    InvalidTransition {
        exit: usize,
        entry: usize,
        reason: String,
    },

    #[error("no path satisfies the duration constraint: {0}")]
    Infeasible(String),

    #[error("span {index} [{start:.4}s, {end:.4}s) is outside the audio ({duration:.4}s)")]
    SpanOutOfBounds {
        index: usize,
        start: f64,
        end: f64,
        duration: f64,
    },

    #[error(
        "crossfade of {crossfade} samples is longer than half of span {index} ({span} samples)"
    )]
    CrossfadeTooLong {
        index: usize,
        crossfade: usize,
        span: usize,
    },

    #[error("json error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The underlying error with any stage attribution stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
