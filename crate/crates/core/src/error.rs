use thiserror::Error;

pub type Result<T, E = PcdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PcdError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("direction vector has zero norm")]
    ZeroDirection,

    #[error("{0} is out of bounds")]
    OutOfBounds(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("task `{0}` has no closed-form Pareto front")]
    NoKnownFront(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("sampling produced a non-finite state at step {step} (sigma = {sigma})")]
    SamplerNonFinite { step: usize, sigma: f64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
