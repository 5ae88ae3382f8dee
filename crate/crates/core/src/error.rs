use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("eigen/singular value decomposition failed to converge")]
    DecompositionFailed,
    #[error("dense representation of dimension {dim} exceeds the oracle limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint record: {0}")]
    Codec(String),
    #[error("every tuning trial failed; first failure: {0}")]
    AllTrialsFailed(String),
}
