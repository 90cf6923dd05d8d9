//! Crate-wide error type.

use crate::exam::PartId;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A required exam part is absent from a grade map or submission.
    #[error("missing part {0}")]
    MissingPart(PartId),

    /// A score that must be finite is NaN or infinite.
    #[error("invalid score: {0}")]
    InvalidScore(f64),

    /// A record in a dataset or prediction file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Matrix/vector dimensions do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A frame sequence with zero frames cannot be pooled.
    #[error("empty frame sequence")]
    EmptySequence,

    /// A forward cache was replayed against a head it does not belong to.
    #[error("cache error: {0}")]
    Cache(String),

    /// No training examples exist for the requested part.
    #[error("empty dataset for part {0}")]
    EmptyDataset(PartId),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged { epoch: usize, step: usize },

    /// Fewer rows than columns (plus intercept) in a least-squares fit.
    #[error("underdetermined system: {rows} rows for {cols} coefficients")]
    Underdetermined { rows: usize, cols: usize },

    /// A combination model was applied to a row lacking one of its columns.
    #[error("missing column {0:?}")]
    MissingColumn(String),

    /// An operation expecting exactly five part scores received another count.
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },

    /// The same (speaker, grader, part) cell appeared twice in prediction files.
    #[error("duplicate prediction for speaker {speaker:?}, grader {grader:?}, part {part:?}")]
    DuplicatePrediction {
        speaker: String,
        grader: String,
        part: String,
    },

    /// Joining prediction files left no shared speakers.
    #[error("empty join: no speaker has predictions for every column")]
    EmptyJoin,

    /// A metric is undefined on the given input (e.g. zero variance).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn shape(message: impl Into<String>) -> Self {
        Error::Shape(message.into())
    }
}
