use thiserror::Error;

/// Crate-wide error type. Variants mirror the contract failures of the
/// public operations: dimension and range validation, dense-enumeration
/// caps, degenerate inputs, and I/O / parse failures for the interchange
/// formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("site index {site} out of range for {n} spins")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("{n} spins exceeds the dense-enumeration cap of {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("requested degree {degree} is infeasible for {n} nodes")]
    InfeasibleDegree { degree: usize, n: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("chain is not reversible (max detailed-balance residual {0:.3e})")]
    NotReversible(f64),

    #[error("magnetization {m} is not on the grid for n = {n}")]
    OffGrid { m: f64, n: usize },

    #[error("no locally stable positive magnetization: {0}")]
    NoPositiveMinimum(String),

    #[error("expansion point is not a local minimum (curvature {0:.6})")]
    NotAMinimum(f64),

    #[error("truncation window covers only {0} grid point(s); need at least 3")]
    DegenerateWindow(usize),

    #[error("invalid samples: {0}")]
    InvalidSamples(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
