use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior box: dimension {dim} has lo = {lo} >= hi = {hi}")]
    InvalidBox { dim: usize, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("signal has zero energy; log-temporal moments are undefined")]
    ZeroEnergy,

    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    #[error("statistic {0} has already been queried")]
    AlreadyQueried(usize),

    #[error("statistic index {index} out of range for pool of size {w}")]
    UnknownStatistic { index: usize, w: usize },

    #[error("session {0} not found")]
    SessionNotFound(String),

    #[error("session is {actual}, expected {expected}")]
    WrongStatus { expected: String, actual: String },

    #[error("stale iteration: client sent k = {sent}, session is at k = {current}")]
    StaleIteration { sent: usize, current: usize },

    #[error("feedback targets statistic {sent}, pending candidate is {pending}")]
    WrongCandidate { sent: usize, pending: usize },

    #[error("expert unavailable: {0}")]
    ExpertUnavailable(String),

    #[error("unsupported session schema {0:?}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
