use std::path::PathBuf;

use crate::market::{AgentId, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid market instance: {0}")]
    InvalidInstance(ValidationReport),

    #[error("type index {index} out of range for {count} types")]
    TypeIndexOutOfRange { index: usize, count: usize },

    #[error("instance parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    InstanceParse { line: Option<usize>, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("event stream `{label}` is not strictly increasing at position {position}")]
    UnsortedStream { label: String, position: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("simplex did not terminate within {iterations} iterations")]
    SimplexIterationLimit { iterations: usize },

    #[error("linear program is {0}")]
    LpNotOptimal(&'static str),

    #[error("ONLINE_MATCH requires an LP solution")]
    MissingSolution,

    #[error("graph has {nodes} nodes, exact matcher threshold is {threshold}")]
    TooManyNodes { nodes: usize, threshold: usize },

    #[error("trace has no departure for agent {0}")]
    MissingLifetime(AgentId),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("diagnostics require ONLINE_MATCH, got {0}")]
    NotOnlineMatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
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
