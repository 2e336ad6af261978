use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("‖T‖^{power}·‖v‖ exceeds the floating-point range")]
    PowerOverflow { power: u64 },

    #[error("eigenvalues {k} and {j} are too close (|λ_k − λ_j| = {gap:e})")]
    IllConditioned { k: usize, j: usize, gap: f64 },

    #[error("operator is not of the required kind: {0}")]
    WrongOperatorKind(&'static str),

    #[error("no return time p ≤ {p_max} for net point {point:?}")]
    NetPointUnsolved { p_max: u64, point: Vec<f64> },

    #[error("net has {points} points, above the cap of {cap}")]
    NetTooLarge { points: f64, cap: usize },

    #[error("return set is empty within horizon {horizon}")]
    EmptyReturnSet { horizon: u64 },

    #[error("construction failed at block {block}: {reason}")]
    Construction { block: usize, reason: String },

    #[error("cantor field construction failed at node `{node}`: {reason}")]
    Cantor { node: String, reason: String },

    #[error("unknown cantor node `{0}`")]
    UnknownNode(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
