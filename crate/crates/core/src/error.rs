//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes the library reports.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or index ranges do not line up (bad `k`, mismatched matrices).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Numerically invalid input or state (NaN/Inf, vanishing denominators).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A matrix required to be entrywise non-negative has a negative entry.
    #[error("non-negativity error: {0}")]
    NonNegativity(String),

    /// Label matrix does not match the data matrix it accompanies.
    #[error("label mismatch error: {0}")]
    LabelMismatch(String),

    /// Malformed input file; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid label set (out-of-range label, empty class, too few classes).
    #[error("label error: {0}")]
    Label(String),

    /// A class has too few samples for the requested episode layout.
    #[error("insufficient samples error: class '{class}': {msg}")]
    InsufficientSamples { class: String, msg: String },

    /// Invalid run configuration (hyperparameter out of range, bad combination).
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "DimensionError",
            Error::Numeric(_) => "NumericError",
            Error::NonNegativity(_) => "NonNegativityError",
            Error::LabelMismatch(_) => "LabelMismatchError",
            Error::Parse { .. } => "ParseError",
            Error::Label(_) => "LabelError",
            Error::InsufficientSamples { .. } => "InsufficientSamplesError",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
