use thiserror::Error;

/// Errors raised by estimation, validation and simulation routines.
///
/// Estimation failures (`InsufficientData`, `BandwidthFailure`, ...) are
/// ordinary outcomes for small samples and are counted as data by the
/// simulation harness rather than treated as crashes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdError {
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("no observations on the {0} side of the cutoff")]
    EmptySide(Side),
    #[error("affine scale must be non-zero")]
    ZeroScale,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("degenerate sample: zero spread")]
    DegenerateSample,
    #[error("curvature bound must be positive for this operation")]
    ZeroCurvatureBound,
    #[error("invalid curvature bound {0}")]
    InvalidCurvatureBound(f64),
    #[error("bandwidth selection failed: {0}")]
    BandwidthFailure(String),
    #[error("standard error is zero; worst-case bias ratio undefined")]
    ZeroSe,
    #[error("window has no observations on the {0} side")]
    EmptyWindowSide(Side),
    #[error("x = {0} is outside the support [-1, 1]")]
    OutOfSupport(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, RdError>;

/// Side of the cutoff. Observations with `x >= c` are treated (`Above`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Below => write!(f, "below"),
            Side::Above => write!(f, "above"),
        }
    }
}
