use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid watermark key: {0}")]
    InvalidKey(String),

    #[error("depth must be at least 1")]
    ZeroDepth,

    #[error("depth mismatch: g-vector has {gvector} layers, weights have {weights}")]
    DepthMismatch { gvector: usize, weights: usize },

    #[error("candidate count {0} is not a power of two")]
    CandidateCount(usize),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model failed at position {position}: {reason}")]
    Model { position: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("entropy gate selects no tokens (q={q}, N0={n0})")]
    EmptyGate { q: f64, n0: usize },

    #[error("model file format error: {0}")]
    Format(String),

    #[error("unsupported model file version {found:?}, expected {expected:?}")]
    Version { found: String, expected: String },

    #[error("corpus {path}: {malformed} of {total} lines malformed (limit 1%)")]
    MalformedCorpus {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("experiment stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
