use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "window t = {window} is under-resolved: {points} grid points at or below it, need at least {required}"
    )]
    Resolution {
        window: f64,
        points: usize,
        required: usize,
    },

    #[error(
        "covariance factorization failed for n = {n}, m = {m} (jitter escalated to {max_jitter:e} of mean diagonal)"
    )]
    Factorization { n: usize, m: usize, max_jitter: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
