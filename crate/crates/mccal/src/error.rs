//! Error type shared by all calibration modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A logit, probability, or input coordinate was NaN or infinite.
    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    /// Temperature must be a positive finite scalar.
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    /// Categorical operations need at least two classes.
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    /// An operation received an empty collection it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Class label outside `0..classes`.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    /// Mixed class counts within one sample set or file.
    #[error("inconsistent class count: expected {expected}, got {got}")]
    ClassCountMismatch { expected: usize, got: usize },

    /// Probabilities must be non-negative and sum to one.
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    /// A confidence, uncertainty, or threshold left the unit interval.
    #[error("value {value} outside [0, 1] ({context})")]
    OutOfUnitInterval { value: f64, context: &'static str },

    /// Bad binning or fit configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The 1-D temperature search could not find any finite objective value.
    #[error("temperature fit failed: {0}")]
    FitFailed(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// Malformed record in a line-delimited dump.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but violates the dump schema.
    #[error("schema error in record {id:?}: {message}")]
    Schema { id: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
