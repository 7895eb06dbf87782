use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One broken dialog invariant, located at a turn when it has one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub turn_index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.turn_index {
            Some(i) => write!(f, "turn {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: duplicate turn_id {turn_id:?}")]
    DuplicateTurnId { line: usize, turn_id: String },

    #[error("events not sorted by (user_id, timestamp) at position {position}")]
    Unsorted { position: usize },

    #[error("invalid dialog {dialog_id}: {}", join(violations))]
    InvalidDialog {
        dialog_id: String,
        violations: Vec<Violation>,
    },

    #[error("no TLD score for turn ids: {}", turn_ids.join(", "))]
    MissingScores { turn_ids: Vec<String> },

    #[error("score {score} for turn {turn_id:?} outside [0, 1]")]
    ScoreOutOfRange { turn_id: String, score: f64 },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("fold {fold} is missing a class after stratification")]
    FoldMissingClass { fold: usize },

    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),

    #[error("correlation undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    /// Errors caused by malformed or inconsistent input, as opposed to I/O.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
