use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid elastic model: {0}")]
    InvalidElastic(String),

    #[error("receiver at x3 = {0} lies above the free surface")]
    ReceiverAboveSurface(f64),

    #[error("dislocation source at x3 = {0} is not strictly below the surface")]
    SourceNotBuried(f64),

    #[error("receiver coincides with the dislocation source (distance {0:e} km)")]
    CoincidentPoints(f64),

    #[error("invalid dislocation: {0}")]
    InvalidDislocation(String),

    #[error("slip direction undefined for a horizontal fault plane (a = b = 0)")]
    DegenerateSlipDirection,

    #[error("fault geometry (a={a}, b={b}, d={d}) is not admissible: {reason}")]
    Inadmissible { a: f64, b: f64, d: f64, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("posterior has empty support on the lattice")]
    EmptySupport,

    #[error("lattice has {nodes} nodes, more than the limit of {limit}")]
    LatticeTooLarge { nodes: usize, limit: usize },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
