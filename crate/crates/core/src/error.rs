use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: cannot parse {field} value `{value}`")]
    Parse {
        line: u64,
        field: String,
        value: String,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset needs both compliant and non-compliant records")]
    SingleClass,
    #[error("spline basis: {0}")]
    Spline(String),
    #[error("unknown level `{level}` for {variable}")]
    UnknownLevel { variable: String, level: String },
    #[error("column mismatch: model expects {expected} columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("record index {index} out of range for {len} records")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("intercept calibration failed: mean probability at [{lo}, {hi}] does not bracket {target}")]
    Calibration { lo: f64, hi: f64, target: f64 },
    #[error("penalized IRLS diverged (possible separation)")]
    IrlsDivergence,
    #[error("non-finite objective: {0}")]
    NonFinite(String),
    #[error("stratum with label {label} has {count} records, fewer than {folds} folds")]
    StratumTooSmall { label: u8, count: usize, folds: usize },
    #[error("AUC undefined for single-class input")]
    UndefinedAuc,
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("empty model: every variable was eliminated")]
    EmptyModel,
    #[error("tuning: every grid point failed ({0})")]
    TuningFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
