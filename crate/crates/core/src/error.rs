use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by grid construction, operators, solvers and experiments.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty integration region")]
    EmptyRegion,

    #[error("empty boundary set")]
    EmptyBoundary,

    #[error("fewer than 3 points along axis {axis} (found {len})")]
    TooFewPoints { axis: usize, len: usize },

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pseudoconvexity violated at {point:?} (left side {value})")]
    PseudoconvexityViolated { point: Vec<f64>, value: f64 },

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("degenerate cut-off band: {0}")]
    DegenerateBand(String),

    #[error("weight overflow; rescale s or γ (exponent {exponent})")]
    WeightOverflow { exponent: f64 },

    #[error("invalid time step {0}")]
    InvalidTimeStep(f64),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("singular system matrix at pivot {0}")]
    SingularMatrix(usize),

    #[error("time derivative order must be 1 or 2, got {0}")]
    InvalidDerivativeOrder(usize),

    #[error("trajectory needs at least {needed} time slices, found {found}")]
    ShortTrajectory { needed: usize, found: usize },

    #[error("R degenerate at t=0: |R| = {magnitude} < r0 = {r0} at {point:?}")]
    DegenerateSource { point: Vec<f64>, magnitude: f64, r0: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = core::result::Result<T, Error>;
