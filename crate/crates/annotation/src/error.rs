use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{what} {id:?} not found")]
    NotFound { what: &'static str, id: String },
    #[error("task {0:?} is not claimed")]
    NotClaimed(String),
    #[error("task {0:?} was already submitted")]
    AlreadySubmitted(String),
    #[error("dialog {0:?} is already in the store")]
    DuplicateDialog(String),
    #[error("questionnaire is missing: {}", .0.join(", "))]
    Incomplete(Vec<&'static str>),
    #[error("invalid questionnaire: {0}")]
    InvalidQuestionnaire(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no dual-annotated dialog has two submitted annotations")]
    NoDualPairs,
    #[error("store line {line}: {message}")]
    CorruptStore { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::NotClaimed(_) => "task_not_claimed",
            ServiceError::AlreadySubmitted(_) => "already_submitted",
            ServiceError::DuplicateDialog(_) => "duplicate_dialog",
            ServiceError::Incomplete(_) => "incomplete_questionnaire",
            ServiceError::InvalidQuestionnaire(_) => "invalid_questionnaire",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::NoDualPairs => "no_dual_pairs",
            ServiceError::CorruptStore { .. } => "corrupt_store",
            ServiceError::Io(_) | ServiceError::Json(_) => "storage_error",
        }
    }
}
