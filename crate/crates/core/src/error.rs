use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

/// Validation and ingest failures for panels, portfolios and synthetic configs.
///
/// `line` is the 1-based line number in the offending file, header included.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },

    #[error("{file}:{line}: dimension mismatch: {detail}")]
    DimensionMismatch { file: String, line: usize, detail: String },

    #[error("{file}:{line}: dates not increasing at {date}")]
    NonMonotoneDates { file: String, line: usize, date: NaiveDate },

    #[error("{file}:{line}: non-positive `{field}` ({value})")]
    NonPositivePrice { file: String, line: usize, field: String, value: f64 },

    #[error("{file}:{line}: cannot parse `{field}`: {message}")]
    Parse { file: String, line: usize, field: String, message: String },

    #[error("{file}:{line}: sector index {value} outside 0..28")]
    InvalidSector { file: String, line: usize, value: i64 },

    #[error("{file}:{line}: stock `{stock}` is assigned more than one sector")]
    MultiSector { file: String, line: usize, stock: String },

    #[error("{file}:{line}: stock `{stock}` has no sector")]
    MissingSector { file: String, line: usize, stock: String },

    #[error("portfolio {portfolio}: unknown stock `{stock}`")]
    UnknownStock { portfolio: String, stock: String },

    #[error("portfolio {portfolio}: date {date} outside panel range")]
    DateOutOfRange { portfolio: String, date: NaiveDate },

    #[error("portfolio {portfolio}: day {date} is not the next trading day")]
    NonContiguousSpan { portfolio: String, date: NaiveDate },

    #[error("portfolio {portfolio}: span of {len} days is shorter than {min}")]
    SpanTooShort { portfolio: String, len: usize, min: usize },

    #[error("portfolio {portfolio}: span of {len} days is longer than {max}")]
    SpanTooLong { portfolio: String, len: usize, max: usize },

    #[error("portfolio {portfolio}: negative {field} on {date}")]
    NegativePosition { portfolio: String, date: NaiveDate, field: String },

    #[error("duplicate portfolio id `{0}`")]
    DuplicatePortfolio(String),

    #[error("degenerate factor `{factor}` on {day}: zero cross-sectional dispersion")]
    DegenerateFactor { day: NaiveDate, factor: &'static str },

    #[error("archetype {archetype}: no stock set reaches target `{factor}` within 0.5 (gap {gap:.3})")]
    InfeasibleArchetype { archetype: usize, factor: &'static str, gap: f64 },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}
