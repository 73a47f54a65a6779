use std::path::PathBuf;

use chrono::NaiveDate;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("unrecoverable data: {0}")]
    UnrecoverableData(String),

    #[error("rate on {date} is not a positive finite number ({value})")]
    Domain { date: NaiveDate, value: f64 },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("fetch failed for {url}: {message}")]
    Fetch { url: String, message: String },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate scale: min and max are both {0}")]
    DegenerateScale(f64),

    #[error("split error: {0}")]
    Split(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value during training at epoch {epoch}, batch {batch}")]
    NumericOverflow { epoch: usize, batch: usize },

    #[error("labels contain a single class; both classes are required")]
    DegenerateClass,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all blocks have zero deviation")]
    DegenerateSeries,

    #[error("non-finite return at index {0}")]
    NonFiniteReturn(usize),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
