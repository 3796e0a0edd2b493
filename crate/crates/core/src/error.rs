use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dates must be strictly increasing: {prev} followed by {next}")]
    UnsortedDates { prev: NaiveDate, next: NaiveDate },

    #[error("nonpositive price {value} for {code} on {date}")]
    NonPositivePrice {
        date: NaiveDate,
        code: String,
        value: f64,
    },

    #[error("empty cell for {code} on {date}")]
    EmptyCell { date: NaiveDate, code: String },

    #[error("empty leading cell for {code} on {date}: nothing to forward-fill from")]
    EmptyLeadingCell { date: NaiveDate, code: String },

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid window length {window} for {rows} return rows")]
    InvalidWindow { window: usize, rows: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("risk aversion must be positive and finite, got {0}")]
    InvalidGamma(f64),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (kkt residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("date {0} not present in the price table")]
    UnknownDate(NaiveDate),

    #[error("asset code mismatch: {0}")]
    CodeMismatch(String),

    #[error("capital must be positive and finite, got {0}")]
    NonPositiveCapital(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
