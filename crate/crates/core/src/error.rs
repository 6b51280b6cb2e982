use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated stream: {0}")]
    TruncatedStream(String),
    #[error("empty frame sequence")]
    EmptySequence,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence too short: {frames} frames, need at least {needed}")]
    SequenceTooShort { frames: usize, needed: usize },
    #[error("region has no pixels")]
    EmptyRegion,
    #[error("{freq_hz} Hz folds exactly onto the Nyquist frequency of {sample_rate_hz} Hz")]
    NyquistBoundary { freq_hz: f64, sample_rate_hz: f64 },
    #[error("series too short: {len} samples, window needs {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("search band {lo_hz:.4}..{hi_hz:.4} Hz contains no spectral bins")]
    EmptyBand { lo_hz: f64, hi_hz: f64 },
    #[error("centre magnitude is not a local maximum")]
    NotALocalMax,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ENF matrix has no rows")]
    EmptyMatrix,
    #[error("need at least 2 ENF rows for scoring, got {0}")]
    TooFewRows(usize),
    #[error("every correlation is undefined (zero-variance vectors)")]
    AllDegenerate,
    #[error("invalid shutter: {0}")]
    InvalidShutter(String),
    #[error("ROC needs both classes present")]
    SingleClass,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
