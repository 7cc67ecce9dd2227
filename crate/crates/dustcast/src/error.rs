//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("malformed header in {path}: expected `{expected}`, got `{got}`")]
    MalformedHeader {
        path: PathBuf,
        expected: String,
        got: String,
    },

    #[error("timestamp `{got}` is not an ISO-8601 hour")]
    BadTimestamp { got: String },

    #[error("station id {got} out of range 0..={max}")]
    StationOutOfRange { got: i64, max: usize },

    #[error("duplicate record for {key} at {timestamp}")]
    DuplicateRecord { key: String, timestamp: String },

    #[error("unknown wind direction code `{got}`")]
    UnknownWindDirection { got: String },

    #[error("empty hour range: end {end} must be after start {start}")]
    EmptyHourRange { start: String, end: String },

    #[error("no records fall within the requested hour range")]
    NoDataInRange,

    #[error("column `{column}` has no present values to impute from")]
    AllMissing { column: String },

    #[error("cannot fit a scaler on an empty table")]
    EmptyTable,

    #[error("variable type `{0}` has a degenerate (min == max) range")]
    DegenerateType(String),

    #[error("series of {len} hours is too short for {window}-hour windows")]
    SeriesTooShort { len: usize, window: usize },

    #[error("split fractions must be positive and sum below 1 (got {train} + {val})")]
    BadSplitFractions { train: f64, val: f64 },

    #[error("split leaves an empty partition (train {train}, val {val}, test {test})")]
    EmptyPartition {
        train: usize,
        val: usize,
        test: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("step size must be positive, got {0}")]
    BadStepSize(f64),

    #[error("training station {station} diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence {
        station: usize,
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("scaler file {path}: {message}")]
    ScalerFile { path: PathBuf, message: String },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("registry {path}: {message}")]
    Registry { path: PathBuf, message: String },

    #[error("station {station} missing from registry")]
    StationNotInRegistry { station: usize },

    #[error("gap fraction {0} outside [0, 0.5)")]
    BadGapFraction(f64),

    #[error("invalid generator config: {0}")]
    BadSynthConfig(String),

    #[error("need {need} hours of history before {hour}, table starts at {table_start}")]
    InsufficientHistory {
        hour: String,
        need: usize,
        table_start: String,
    },

    #[error("day {day} is not fully covered by the table")]
    DayNotCovered { day: String },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("no reports to render")]
    NoReports,

    #[error("series export is empty")]
    EmptySeries,

    #[error("series file {path}: {message}")]
    SeriesFile { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code class: training divergence is 4, every other failure 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }

    /// Short category tag for the CLI's one-line error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Divergence { .. } => "train",
            _ => "data",
        }
    }
}
