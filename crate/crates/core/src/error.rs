use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty utterance: {0}")]
    EmptyUtterance(String),

    #[error("insufficient frames: need at least {need}, got {got}")]
    InsufficientFrames { need: usize, got: usize },

    #[error("degenerate embedding: norm {norm:e} is too small to normalize")]
    DegenerateEmbedding { norm: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("architecture mismatch: checkpoint holds {found}, expected {expected}")]
    ArchMismatch { expected: String, found: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("miner starvation: anchor {anchor} has no different-speaker candidate within {scan_k} partition(s)")]
    MinerStarvation { anchor: usize, scan_k: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("scores contain only one class ({0}); need both targets and nontargets")]
    SingleClass(&'static str),

    #[error("malformed trial group {group}: {msg}")]
    MalformedGroup { group: usize, msg: String },

    #[error("degenerate fusion: summed embedding norm {norm:e}")]
    DegenerateFusion { norm: f64 },

    #[error("zero-variance score set")]
    ZeroVariance,

    #[error("missing artifact {path}: run `voxembed {producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("audio error: {0}")]
    Audio(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
