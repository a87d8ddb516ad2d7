use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: u32, got: u32 },

    #[error("coordinate index {index} out of range for dimension {n} (valid: 1..={n})")]
    IndexOutOfRange { index: u32, n: u32 },

    #[error("interval [{lo},{hi}] out of range for dimension {n}")]
    IntervalOutOfRange { lo: u32, hi: u32, n: u32 },

    #[error("malformed block list: {0}")]
    MalformedBlocks(String),

    #[error("dimension {n} exceeds enumeration cap {cap}; construct the cube with an explicit cap override to allow it")]
    CapExceeded { n: u32, cap: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter chain violated: {name} (lhs {lhs:e} vs rhs {rhs:e})")]
    LedgerViolation { name: String, lhs: f64, rhs: f64 },

    #[error("point is not in the tabulated domain: {0}")]
    UnknownPoint(String),

    #[error("distance table is not a pseudometric: {0}")]
    NotPseudometric(String),

    #[error("branching product overflows the supported range")]
    TreeOverflow,

    #[error("profile/tree shape mismatch: {0}")]
    ProfileShape(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
