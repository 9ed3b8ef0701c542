use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by estimation, resampling and simulation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("rank-deficient normal equations: {0}")]
    RankDeficient(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    #[error("insufficient replicates: needed {needed}, have {available}")]
    InsufficientReplicates { needed: usize, available: usize },

    #[error("unknown model `{0}` (expected one of: biexp4, singleexp1, linear1)")]
    UnknownModel(String),

    #[error("unknown weight scheme `{0}` (expected one of: multinomial, dirichlet, exponential)")]
    UnknownScheme(String),
}
