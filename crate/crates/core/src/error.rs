use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid axis {axis}: {reason}")]
    InvalidGrid { axis: usize, reason: String },

    #[error("grid spacing must be positive, got {0}")]
    InvalidSpacing(f64),

    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),

    #[error("point index {index} out of range for {len} points")]
    PointOutOfRange { index: usize, len: usize },

    #[error("alpha range [{alpha1}, {alpha2}] must satisfy [alpha1, alpha2] in (0,2)")]
    InvalidAlphaRange { alpha1: f64, alpha2: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("pair ({x}, {y}) at distance {distance} exceeds radius {radius}")]
    PairTooFar {
        x: usize,
        y: usize,
        distance: f64,
        radius: f64,
    },

    #[error("invalid scale table: {0}")]
    InvalidScaleTable(String),

    #[error("negative kernel entry {value} at ({i}, {j})")]
    NegativeKernelEntry { i: usize, j: usize, value: f64 },

    #[error("asymmetric kernel: J({i},{j}) = {a} but J({j},{i}) = {b}")]
    AsymmetricKernel { i: usize, j: usize, a: f64, b: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("set A is not contained in B (point {0})")]
    NotSubset(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix restricted to the domain is not positive definite")]
    NotPositiveDefinite,

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{points} points exceeds the dense cap of {cap}; use the Monte Carlo estimators instead")]
    TooLarge { points: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
