use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} of parameter `{name}` is outside its transform domain")]
    OutOfDomain { name: String, value: f64 },
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("step size {h:e} fell below the minimum at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    Budget { t: f64, max_steps: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("innovation variance {0} is not positive")]
    SingularInnovation(f64),
    #[error("bad resampling weights: {0}")]
    BadWeights(String),
    #[error("empirical covariance needs {need} distinct samples, have {have}")]
    NotEnoughSamples { have: usize, need: usize },
    #[error("parameter `{0}` has an unbounded transformed range")]
    UnboundedDimension(String),
    #[error("degenerate simplex: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("expression error: {0}")]
    Expr(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
