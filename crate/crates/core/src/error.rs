use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is unsupported (need n >= 3)")]
    DimensionUnsupported(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite coordinate in point")]
    NonFinite,

    #[error("kernel is singular: evaluation points coincide")]
    Singular,

    #[error("point {0:?} is not strictly inside the domain")]
    OutsideDomain(Vec<f64>),

    #[error("point {point:?} is closer than {min_distance} to the grid boundary")]
    TooCloseToBoundary { point: Vec<f64>, min_distance: f64 },

    #[error("charge points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),

    #[error("weights must sum to zero when gamma is empty (sum = {0:e})")]
    NonZeroCharge(f64),

    #[error("weights: length {weights} does not match points length {points}")]
    LengthMismatch { points: usize, weights: usize },

    #[error("charge configuration is empty")]
    EmptyConfig,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("voxel mask is empty")]
    EmptyMask,

    #[error("voxel mask is disconnected ({0} components)")]
    Disconnected(usize),

    #[error("a single charge cannot be used with gamma empty; use a zero-sum configuration")]
    SingleChargeNeumann,

    #[error("solver did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("neumann data incompatible: discrete flux defect {defect:e} exceeds {tol:e}")]
    Incompatible { defect: f64, tol: f64 },

    #[error("no real Robin radius: regular part at the pole is {0:e} (must be negative)")]
    NoRealRadius(f64),

    #[error("invalid exclusion: {0}")]
    BadExclusion(String),

    #[error("structural condition {condition} violated: {detail}")]
    Structural { condition: String, detail: String },

    #[error("domains overlap: {0}")]
    Overlap(String),

    #[error("containment violated: {0}")]
    Containment(String),

    #[error("charge structure mismatch: {0}")]
    ChargeMismatch(String),

    #[error("no feasible iterate found")]
    Infeasible,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
