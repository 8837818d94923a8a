use std::path::PathBuf;

use thiserror::Error;

/// Identifies one `(u, s, k)` slice of a dataset. `s` is absent for slices
/// that pool both sensitive groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceId {
    pub u: u8,
    pub s: Option<u8>,
    pub k: usize,
}

impl std::fmt::Display for SliceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.s {
            Some(s) => write!(f, "(u={}, s={}, k={})", self.u, s, self.k),
            None => write!(f, "(u={}, k={})", self.u, self.k),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature dimension must be at least 1")]
    ZeroDimension,
    #[error("record {record}: expected {expected} features, found {found}")]
    DimensionMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("record {record}: feature {feature} is not finite ({value})")]
    NonFiniteFeature {
        record: usize,
        feature: usize,
        value: f64,
    },
    #[error("record {record}: attribute {attribute} outside {{0,1}} (got {value})")]
    AttributeOutOfRange {
        record: usize,
        attribute: &'static str,
        value: i64,
    },
    #[error("degenerate range: all {count} values equal {value}")]
    DegenerateRange { count: usize, value: f64 },
    #[error("need at least {needed} values, got {found}")]
    TooFewValues { needed: usize, found: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("grid size must be at least 2, got {0}")]
    InvalidGridSize(usize),
    #[error("invalid probability mass: {0}")]
    InvalidMass(String),
    #[error("marginal mass mismatch: source sums to {source_mass}, target sums to {target_mass}")]
    MassMismatch { source_mass: f64, target_mass: f64 },
    #[error("distributions live on different supports")]
    SupportMismatch,
    #[error("instance with {0} states exceeds the oracle limit of {max}", max = crate::transport::ORACLE_MAX_STATES)]
    OracleTooLarge(usize),
    #[error("interpolation parameter t must lie in [0,1], got {0}")]
    InvalidT(f64),
    #[error("empty research cell {0}")]
    EmptyCell(SliceId),
    #[error("degenerate feature slice {slice}: all values equal {value}")]
    DegenerateSlice { slice: SliceId, value: f64 },
    #[error("invalid n_Q {n_q} for slice {slice}")]
    InvalidResolution { slice: SliceId, n_q: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("model file format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupted model file: {0}")]
    CorruptModel(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("{bad} of {total} rows could not be parsed (tolerance {tolerance})")]
    TooManyBadRows {
        bad: usize,
        total: usize,
        tolerance: f64,
    },
    #[error("research size {n_r} must be smaller than the record count {n}")]
    SplitTooLarge { n_r: usize, n: usize },
    #[error("could not obtain non-empty research cells after {0} attempts")]
    RetriesExhausted(usize),
    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable class name, used for CLI exit reporting.
    pub fn class(&self) -> &'static str {
        match self {
            Error::EmptyDataset
            | Error::ZeroDimension
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteFeature { .. }
            | Error::AttributeOutOfRange { .. }
            | Error::LengthMismatch { .. } => "invalid-data",
            Error::DegenerateRange { .. }
            | Error::TooFewValues { .. }
            | Error::DegenerateSlice { .. } => "degenerate-data",
            Error::EmptyCell(_) => "empty-cell",
            Error::InvalidBandwidth(_)
            | Error::InvalidGridSize(_)
            | Error::InvalidT(_)
            | Error::InvalidResolution { .. }
            | Error::Config(_) => "invalid-config",
            Error::InvalidMass(_)
            | Error::MassMismatch { .. }
            | Error::SupportMismatch
            | Error::OracleTooLarge(_) => "invalid-distribution",
            Error::SchemaMismatch(_) => "schema-mismatch",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::CorruptModel(_) | Error::NonFiniteValue(_) => "corrupt-model",
            Error::MissingColumn(_) | Error::BadRow { .. } | Error::TooManyBadRows { .. } => {
                "bad-input"
            }
            Error::SplitTooLarge { .. } | Error::RetriesExhausted(_) => "split-failed",
            Error::Replication { source, .. } => source.class(),
            Error::Io { .. } => "io",
            Error::Csv(_) => "bad-input",
            Error::Json(_) => "corrupt-model",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
