use thiserror::Error;

#[derive(Debug, Error)]
pub enum GscmError {
    #[error("{quantity} = {value} is outside the valid range [{min}, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported {what}: {given} (supported: {supported})")]
    Unsupported {
        what: &'static str,
        given: String,
        supported: String,
    },

    #[error("cross-correlation matrix for {context} is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { context: String, min_eigenvalue: f64 },

    #[error("dimension mismatch on axis `{axis}`: expected {expected}, got {got}")]
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("table {table}, line {line}: {reason}")]
    Table {
        table: String,
        line: usize,
        reason: String,
    },

    #[error("empty drop region: {0}")]
    EmptyDropRegion(String),

    #[error("bundle error: {0}")]
    Bundle(String),

    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GscmError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> GscmError {
    GscmError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
