use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),

    #[error("node id {id} out of range (network has {count} nodes)")]
    InvalidNode { id: usize, count: usize },

    #[error("edge weight must be positive and finite, got {0}")]
    InvalidWeight(f64),

    #[error("edge {0} -> {1} does not connect a PC node to an SC node")]
    BipartiteViolation(usize, usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: malformed header, expected `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("duplicate physician id `{0}`")]
    DuplicatePhysician(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("power iteration did not converge after {iterations} iterations (last delta {delta:e})")]
    NoConvergence { iterations: usize, delta: f64 },

    #[error("nodes missing from embedding: {0:?}")]
    MissingNodes(Vec<usize>),

    #[error("labels contain a single class; classifier is undefined")]
    DegenerateLabels,

    #[error("exact Shapley enumeration supports at most {max} features, got {got}; use a sampling estimator")]
    TooManyFeatures { got: usize, max: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
