use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("topology: {0}")]
    Topology(String),

    #[error("weight matrices rejected: {0}")]
    Weights(String),

    #[error(
        "spanning-tree condition violated: {detail} (pull graph roots: {pull_roots:?}, \
         push graph roots: {push_roots:?}; a common root is required)"
    )]
    SpanningTree {
        detail: String,
        pull_roots: Vec<usize>,
        push_roots: Vec<usize>,
    },

    #[error("{what} did not converge within {iterations} iterations (last change {last_change:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last_change: f64,
    },

    #[error("non-finite state at iteration {k}: {detail}")]
    NonFinite { k: usize, detail: String },

    #[error(
        "agent {agent} starts at the optimum, normalized residual is undefined; \
         perturb the initial iterate"
    )]
    ZeroInitialDistance { agent: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("analysis precondition violated: {0}")]
    Precondition(String),

    #[error("traces are not from adjacent function sets: gradients differ at agents {agents:?}")]
    NotAdjacent { agents: Vec<usize> },

    #[error("{0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
