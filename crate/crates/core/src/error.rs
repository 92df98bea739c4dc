use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero wave vector is not allowed")]
    ZeroWaveVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mode sets differ")]
    ModeSetMismatch,

    #[error("custom flow coefficient at mode {mode:?} is not divergence-free (|k.u| = {residual:e})")]
    NotDivergenceFree { mode: Vec<i32>, residual: f64 },

    #[error("custom flow coefficients violate reality symmetry at mode {mode:?}")]
    RealitySymmetry { mode: Vec<i32> },

    #[error("step size underflow at t = {t_reached} (stiff or degenerate input)")]
    StepUnderflow { t_reached: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    #[error("time {t} exceeds the configured maximum {t_max}")]
    HorizonTooLong { t: f64, t_max: f64 },

    #[error("eigensolver failed to converge (matrix hash {hash:016x})")]
    EigenNonConvergence { hash: u64 },

    #[error("matrix dimension {dim} exceeds the configured cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("shift is within {distance:e} of the spectrum")]
    NearSingularShift { distance: f64 },

    #[error("eigenvalue {eigenvalue} lies within the guard band of the contour (distance {distance:e})")]
    EigenvalueOnContour { eigenvalue: String, distance: f64 },

    #[error("Riesz projection idempotency defect {defect:e} exceeds tolerance {tol:e}")]
    IdempotencyDefect { defect: f64, tol: f64 },

    #[error("ambiguous trace {trace}; not within tolerance of an integer")]
    AmbiguousTrace { trace: String },

    #[error("matrix exponential would overflow: norm*t = {norm_t:e}; split t into at least {required_splits} pieces")]
    ExponentialOverflow { norm_t: f64, required_splits: usize },

    #[error("|z| = {z_abs:e} does not exceed the remainder spectral radius {radius:e}")]
    InsideRemainderRadius { z_abs: f64, radius: f64 },

    #[error("grid of {grid} points is under-resolved (top-third energy fraction {fraction:e})")]
    Aliasing { grid: usize, fraction: f64 },

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
