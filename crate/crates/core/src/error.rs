//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by corpus handling, metric evaluation, fitting and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A JSONL line could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record violated a schema invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument was outside its documented range.
    #[error("argument error: {0}")]
    Argument(String),

    /// A metric is undefined for the given input (typically an empty series).
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    /// A calibrator fit could not be performed.
    #[error("fit error: {0}")]
    Fit(String),

    /// A loss was evaluated on a batch with no unmasked cells.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// The AUC surrogate loss needs at least one true and one false answer.
    #[error("single-class batch: AUC surrogate loss needs both true and false answers")]
    SingleClass,

    /// Matrix or vector dimensions did not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A model id was not found among the trained heads.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A baseline extraction produced no usable answers.
    #[error("empty baseline: {0}")]
    EmptyBaseline(String),

    /// A configuration value was inconsistent or unknown.
    #[error("configuration error: {0}")]
    Config(String),

    /// Pearson correlation is undefined when either input has zero variance.
    #[error("undefined correlation: zero variance input")]
    UndefinedCorrelation,

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable name of the error kind, used by the CLI for stderr reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Argument(_) => "argument",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Fit(_) => "fit",
            Error::DegenerateBatch(_) => "degenerate-batch",
            Error::SingleClass => "single-class",
            Error::Shape(_) => "shape",
            Error::Lookup(_) => "lookup",
            Error::EmptyBaseline(_) => "empty-baseline",
            Error::Config(_) => "config",
            Error::UndefinedCorrelation => "undefined-correlation",
            Error::Io(_) => "io",
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
