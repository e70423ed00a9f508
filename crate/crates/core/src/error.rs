use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("atoms {first} and {second} coincide (separation {separation:e} m)")]
    SingularSeparation {
        first: usize,
        second: usize,
        separation: f64,
    },

    #[error("collective decay matrix is not positive semidefinite: eigenvalue {eigenvalue:e} rad/s")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("integration failed at t = {time:e} s: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("unknown preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("detuning point {index}: {source}")]
    Point {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
