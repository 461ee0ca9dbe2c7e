use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: f64, right: f64 },

    #[error("rate {rate} Hz is below the required {required} Hz")]
    Undersampled { rate: f64, required: f64 },

    #[error("signal has zero energy")]
    ZeroEnergy,

    #[error("signal is constant; cannot normalize")]
    ConstantSignal,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(&'static str),

    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("duplicate link {0}")]
    DuplicateLink(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
