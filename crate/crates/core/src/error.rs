use chrono::NaiveDateTime;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("row {row}: timestamp {ts} is not after the previous one")]
    NonMonotonicTimestamp { row: usize, ts: NaiveDateTime },

    #[error("row {row}: timestamp {ts} is not aligned to a 30-minute settlement period")]
    MisalignedTimestamp { row: usize, ts: NaiveDateTime },

    #[error("row {row}: gap of {missing} missing rows exceeds the limit of {limit}")]
    GapExceedsLimit {
        row: usize,
        missing: usize,
        limit: usize,
    },

    #[error("row {row}: non-finite value in column `{column}`")]
    NonFiniteValue { row: usize, column: String },

    #[error("row {row}: day-ahead price differs within the clock hour")]
    InconsistentDam { row: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("origin {origin}: insufficient history")]
    InsufficientHistory { origin: NaiveDateTime },

    #[error("origin {origin}: insufficient future periods")]
    InsufficientFuture { origin: NaiveDateTime },

    #[error("timestamp {0} not present in series")]
    UnknownTimestamp(NaiveDateTime),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite input to solver")]
    NonFiniteInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("horizon {horizon}: {source}")]
    Horizon {
        horizon: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparam(String),

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("all {0} tuning trials failed")]
    TuningFailed(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate loss-differential variance")]
    DegenerateVariance,
}

impl Error {
    pub(crate) fn at_horizon(self, horizon: usize) -> Self {
        Error::Horizon {
            horizon,
            source: Box::new(self),
        }
    }
}
