use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: year {year} outside available range {first}..={last}")]
    YearOutOfRange {
        what: &'static str,
        year: i32,
        first: i32,
        last: i32,
    },
    #[error("{what}: year {year} not present")]
    MissingYear { what: &'static str, year: i32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("unattainable: {0}")]
    Unattainable(String),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
