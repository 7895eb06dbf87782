//! Dialog quality annotation service: task queue with dual annotation,
//! append-only JSON Lines store, training export and an HTTP API.

pub mod error;
pub mod http;
pub mod model;
pub mod service;
pub mod store;

pub use error::{Result, ServiceError};
pub use model::{AnnotationRecord, AnnotationTask, QuestionnaireDraft, TaskStatus};
pub use service::{AgreementReport, AnnotationService, DEFAULT_DUAL_FRACTION};
pub use store::Store;
