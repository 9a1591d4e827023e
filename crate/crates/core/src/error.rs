use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("nonpositive price for ticker {ticker} on {date}: {value}")]
    NonpositivePrice {
        ticker: String,
        date: String,
        value: f64,
    },
    #[error("dates are not strictly increasing at row {row}")]
    DatesNotIncreasing { row: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("state {0} has no windows")]
    EmptyState(usize),
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error("ticker {0} has missing cells and missing-data policy is hard-error")]
    MissingData(String),
    #[error("simulator resampled {resampled} of {total} draws, above the 0.1% budget")]
    ResampleBudget { resampled: usize, total: usize },
    #[error("pipeline stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
