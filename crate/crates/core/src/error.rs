use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: cannot read audio: {cause}")]
    AudioRead { path: PathBuf, cause: String },

    #[error("{path}: unsupported audio format: {cause}")]
    UnsupportedAudio { path: PathBuf, cause: String },

    #[error("{path}: audio contains no samples")]
    EmptyAudio { path: PathBuf },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal too short: {samples} samples, need at least {needed}")]
    SignalTooShort { samples: usize, needed: usize },

    #[error("span {start_s:.3}-{end_s:.3} s is outside the track ({track_s:.3} s)")]
    SpanOutsideTrack { start_s: f64, end_s: f64, track_s: f64 },

    #[error("span {start_s:.3}-{end_s:.3} s covers {frames} frames, need at least {needed}")]
    SpanTooShort {
        start_s: f64,
        end_s: f64,
        frames: usize,
        needed: usize,
    },

    #[error("{path}, line {line}: {cause}")]
    Manifest {
        path: PathBuf,
        line: u64,
        cause: String,
    },

    #[error("{path}: duplicate pair_id {pair_id:?}")]
    DuplicatePair { path: PathBuf, pair_id: String },

    #[error("{path}: pair {pair_id:?} references missing audio file {audio}")]
    MissingAudio {
        path: PathBuf,
        pair_id: String,
        audio: PathBuf,
    },

    #[error("split: {0}")]
    Split(String),

    #[error("model: {0}")]
    Model(String),

    #[error("model/extractor mismatch: {0}")]
    LayoutMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
