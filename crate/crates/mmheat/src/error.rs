//! Error types shared across the solver.
//!
//! Errors split into three layers: problem validation (rejects a bad setup
//! before any stepping), per-step failures (signals that make the driver
//! reject the step and retry with a smaller Δt), and run-level failures
//! (the run cannot continue at all).

use thiserror::Error;

/// A problem definition that can never be stepped.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("source positions must be strictly increasing, got {positions:?}")]
    SourcesOutOfOrder { positions: Vec<f64> },

    #[error("source {index} at {position} lies outside the open domain ({left}, {right})")]
    SourceOutsideDomain {
        index: usize,
        position: f64,
        left: f64,
        right: f64,
    },

    #[error("monitor weights must have {expected} entries summing to 1, got {weights:?}")]
    WeightsNotNormalized { weights: Vec<f64>, expected: usize },

    #[error("mesh partition {partition:?} is invalid: {reason}")]
    BadPartition { partition: Vec<usize>, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("initial condition violates the boundary value at x = {x}: u0 = {u0}, boundary = {expected}")]
    IncompatibleInitialCondition { x: f64, u0: f64, expected: f64 },
}

/// Failure of a single time step. All variants are treated as step-rejection
/// signals: the driver halves Δt and retries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("mesh tangled in subdomain {slice}: nodes are no longer strictly increasing")]
    MeshTangled { slice: usize },

    #[error("singular linear system while moving the mesh")]
    SingularSystem,

    #[error("Newton iteration failed to converge after {iterations} iterations (last residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("source ordering lost after position update: {positions:?}")]
    SourcesCollided { positions: Vec<f64> },

    #[error("source {index} left the computational domain")]
    SourceLeftDomain { index: usize },

    #[error("non-finite value encountered in the solution")]
    NonFiniteSolution,

    #[error("degenerate flux jump |F| = {magnitude:.3e} < 1e-12; interface velocity undefined")]
    DegenerateJump { magnitude: f64 },

    #[error("exact-solution oracle failed: {0}")]
    Oracle(#[from] OracleError),
}

/// Failure of an entire run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("problem validation failed: {}", format_validation(.0))]
    Validation(Vec<ValidationError>),

    #[error("step at t = {time:.12e} rejected {rejections} times in a row; last failure: {last}")]
    TooManyRejections {
        time: f64,
        rejections: usize,
        last: StepError,
    },

    #[error("failed to construct the initial mesh: {0}")]
    InitialMesh(String),

    #[error("failed to evaluate the initial source velocities: {0}")]
    InitialVelocities(StepError),

    #[error("interface root finder failed: {0}")]
    Oracle(#[from] OracleError),
}

fn format_validation(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Failures inside the exact-solution oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("no sign change on [{left}, {right}] at t = {time}")]
    RootNotBracketed { left: f64, right: f64, time: f64 },

    #[error("flux jump magnitude {magnitude:.3e} too small to divide by")]
    DegenerateJump { magnitude: f64 },
}

/// Rejected configuration text. Line numbers are 1-based; 0 marks a
/// file-level problem such as a missing required key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

/// Linear-algebra failures.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinAlgError {
    #[error("pivot magnitude {pivot:.3e} below 1e-300 at row {row}")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

impl From<LinAlgError> for StepError {
    fn from(_: LinAlgError) -> Self {
        StepError::SingularSystem
    }
}
