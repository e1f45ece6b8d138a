use thiserror::Error;

/// Errors produced by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("scan sequencing error: expected seq {expected}, got {got}")]
    Sequencing { expected: u64, got: u64 },
    #[error("scan buffer is empty")]
    EmptyBuffer,
    #[error("no points available for a measurement")]
    NoMeasurement,
    #[error("measurement rejected: {0}")]
    RejectedMeasurement(String),
    #[error("fusion degenerate: {0}")]
    FusionDegenerate(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("no return pixels inside detection box")]
    EmptyDetection,
    #[error("image has no return pixels")]
    DegenerateImage,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
