use thiserror::Error;

pub type Result<T, E = CimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CimError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("edge list contains no edges")]
    EmptyInput,

    #[error("unknown node id {0}")]
    UnknownNode(u64),

    #[error("invalid invitation profile: {0}")]
    InvalidProfile(String),

    #[error("invitation graph is disconnected: node {0} is unreachable from the requester")]
    Disconnected(u64),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unbounded quantile: probability {0} maps to +infinity")]
    UnboundedQuantile(f64),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid contest parameters: {0}")]
    InvalidParams(String),

    #[error("quadrature failed: {0}")]
    Integration(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency violated: {0}")]
    InternalConsistency(String),

    #[error("best-response iteration did not converge after {rounds} rounds (max residual {residual:e})")]
    NonConvergence { rounds: usize, residual: f64 },

    #[error("equilibrium solve failed on deviation tree {fingerprint}: {source}")]
    Deviation {
        fingerprint: String,
        #[source]
        source: Box<CimError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
