use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {got} does not match grid cell count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value {value} at cell {cell}")]
    NonFinite { cell: usize, value: f64 },

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("field mean {mean:e} is not zero (tolerance {tolerance:e})")]
    NonZeroMean { mean: f64, tolerance: f64 },

    #[error("means differ by {difference:e}")]
    MeanMismatch { difference: f64 },

    #[error("separation violated at cell {cell}: value {value} (bound {bound})")]
    Separation { cell: usize, value: f64, bound: f64 },

    #[error("inconsistent {what} pair at cell {cell}: discrepancy {discrepancy:e}")]
    Inconsistent {
        what: &'static str,
        cell: usize,
        discrepancy: f64,
    },

    #[error("linear solver did not converge: residual {residual:e} after {iterations} iterations")]
    LinearSolver { residual: f64, iterations: usize },

    #[error("singular matrix at pivot {0}")]
    SingularMatrix(usize),

    #[error("Newton iteration stalled: residual {residual:e} after {iterations} iterations; reduce dt")]
    NewtonDivergence { residual: f64, iterations: usize },

    #[error("step {step} at t = {time} failed: {source}")]
    StepFailed {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("maximum principle violated at cell {cell}: value {value} outside [{lower}, {upper}]")]
    MaximumPrinciple {
        cell: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("profile does not satisfy the no-flux condition: normal derivative {0:e}")]
    NotNeumann(f64),

    #[error("reference integrator failed at t = {time}: {reason}")]
    Reference { time: f64, reason: String },

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("continuation run with delta = {delta} failed: {source}")]
    Continuation {
        delta: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
