use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping of errors, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Training,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel {pixel_id} on {date}: expected {expected} reflectances, found {found}")]
    BandCountMismatch {
        pixel_id: String,
        date: NaiveDate,
        expected: usize,
        found: usize,
    },
    #[error("pixel {pixel_id} on {date}: band {band} has negative reflectance {value}")]
    NegativeReflectance {
        pixel_id: String,
        date: NaiveDate,
        band: String,
        value: f64,
    },
    #[error("pixel {pixel_id} on {date}: {field} is not finite")]
    NonFiniteValue {
        pixel_id: String,
        date: NaiveDate,
        field: String,
    },
    #[error("pixel {pixel_id} on {date}: cloud_fraction {value} outside [0, 1]")]
    CloudFractionOutOfRange {
        pixel_id: String,
        date: NaiveDate,
        value: f64,
    },
    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("unknown weed class `{0}`")]
    UnknownClass(String),
    #[error("unknown band code `{0}`")]
    UnknownBand(String),
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("window end {end} is not after window start {start}")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },
    #[error("grid step must be at least one day")]
    InvalidStep,
    #[error("series has no observations")]
    EmptySeries,
    #[error("series dates are not strictly ascending at position {0}")]
    NonAscendingDates(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),
    #[error("band series do not share the feature grid: {0}")]
    GridMismatch(String),
    #[error("parcel {0} has no pixels")]
    EmptyParcel(String),
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("class {class} has {count} rows, at least {required} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        required: usize,
    },
    #[error("class {class} has {count} rows, fewer than {folds} folds")]
    ClassSmallerThanFolds {
        class: String,
        count: usize,
        folds: usize,
    },
    #[error("fraction {0} outside its allowed range")]
    FractionOutOfRange(f64),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("k = {k} exceeds the {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unsupported model format version {0}")]
    UnsupportedModelVersion(u32),

    #[error("empty input")]
    EmptyInput,
    #[error("all class supports are zero")]
    ZeroSupport,
    #[error("unsupported report format `{0}`")]
    UnsupportedFormat(String),
    #[error("malformed record: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            EmptyWindow { .. }
            | InvalidStep
            | UnknownSensor(_)
            | FractionOutOfRange(_)
            | InvalidHyperparameter(_)
            | UnsupportedFormat(_) => ErrorCategory::Config,
            ClassTooSmall { .. }
            | ClassSmallerThanFolds { .. }
            | EmptyTrainingSet
            | KTooLarge { .. } => ErrorCategory::Training,
            Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Data,
        }
    }
}
