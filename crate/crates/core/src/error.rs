use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("{name} = {value} is outside its domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("target epsilon {0} is unreachable (ramp only approaches 1 asymptotically)")]
    UnreachableTarget(f64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("truncation residual {residual:.3e} exceeds tolerance {tolerance:.3e}: {detail}")]
    Accuracy {
        residual: f64,
        tolerance: f64,
        detail: String,
    },
    #[error("negative rate {value} for channel {channel}")]
    NegativeRate { channel: String, value: f64 },
    #[error("step size underflow at t = {t} us (dt = {dt:.3e} us); problem too stiff for the tolerance")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("trace drifted by {drift:.3e} at t = {t} us")]
    TraceDrift { t: f64, drift: f64 },
    #[error("ill-conditioned design matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular crosstalk matrix (|det| = {0:.3e})")]
    Singular(f64),
    #[error("no interior minimum within the sweep range: {0}")]
    NoMinimum(String),
    #[error("model mismatch: {0}")]
    Model(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}
