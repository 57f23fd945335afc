use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: missing value for `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("row {row}: cannot parse `{column}` value {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: log of non-positive {kind} `{column}` ({value})")]
    NonPositive {
        row: usize,
        column: String,
        kind: &'static str,
        value: f64,
    },

    #[error("row {row}: duplicate observation for firm `{firm}` in year {year}")]
    DuplicateObservation { row: usize, firm: String, year: i32 },

    #[error("empty estimation set: {0}")]
    EmptyEstimationSet(String),

    #[error("misaligned input: {0}")]
    Misaligned(String),

    #[error("rank-deficient design; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("residual vector is not demeaned (sum {sum:e})")]
    NotDemeaned { sum: f64 },

    #[error("likelihood evaluation failed: {0}")]
    Evaluation(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
