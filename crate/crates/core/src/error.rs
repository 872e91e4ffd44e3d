use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while constructing or decoding core value types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("non-finite coordinate ({x}, {y})")]
    InvalidCoordinate { x: f64, y: f64 },
    #[error("unknown collision type {0:?}")]
    UnknownType(String),
    #[error("invalid clip {clip_id}: {reason}")]
    InvalidClip { clip_id: String, reason: String },
    #[error("degenerate or out-of-range box [{x0}, {y0}, {x1}, {y1}]")]
    InvalidBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Failure to turn a model completion into a structured answer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("response schema error: {0}")]
    SchemaError(String),
}

#[derive(Debug, Error)]
pub enum FrameLoadError {
    #[error("clip {clip_id} has no frame source")]
    NoSource { clip_id: String },
    #[error("failed to load frame for clip {clip_id} at t={t:.3}s from {path:?}: {reason}")]
    Unreadable {
        clip_id: String,
        t: f64,
        path: PathBuf,
        reason: String,
    },
}

/// Transport-level inference failures, always tagged with the clip they belong to.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("clip {clip_id}: request timed out after {attempts} attempt(s)")]
    Timeout { clip_id: String, attempts: u32 },
    #[error("clip {clip_id}: transport error: {message}")]
    Transport { clip_id: String, message: String },
    #[error("clip {clip_id}: HTTP status {code}")]
    HttpStatus { clip_id: String, code: u16 },
    #[error("clip {clip_id}: malformed completion payload: {message}")]
    BadPayload { clip_id: String, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether another attempt may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout { .. } | BackendError::Transport { .. } => true,
            BackendError::HttpStatus { code, .. } => *code == 429 || *code >= 500,
            BackendError::BadPayload { .. } | BackendError::Config(_) => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot blend predictions for different clips ({a} vs {b})")]
pub struct EnsembleMismatch {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric configuration: {0}")]
    Config(String),
    #[error("duplicate prediction for clip {0}")]
    DuplicatePrediction(String),
}

/// Errors surfaced by the batch harness and file formats.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path:?} line {line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleMismatch),
    #[error(transparent)]
    Frame(#[from] FrameLoadError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
