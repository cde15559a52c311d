use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hilbert space needs at least one factor")]
    EmptySpace,
    #[error("factor {index}: {reason}")]
    BadFactor { index: usize, reason: String },
    #[error("factor index {index} out of range for a space with {len} factors")]
    FactorOutOfRange { index: usize, len: usize },
    #[error("operands live on different hilbert spaces ({left} vs {right})")]
    SpaceMismatch { left: String, right: String },
    #[error("matrix is {rows}x{cols}, expected {expected}x{expected}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("operator is not hermitian (max |M - M^dag| = {0:e})")]
    NotHermitian(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("integrator failed at t = {time}: {reason}")]
    Integrator { time: f64, reason: String },
    #[error("liouvillian null space is degenerate (zero-eigenvalue multiplicity {multiplicity})")]
    DegenerateSteadyState { multiplicity: String },
    #[error("linear solve did not converge: {0}")]
    Solver(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("reference series is not oscillatory: {0}")]
    NotOscillatory(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
