//! JSON HTTP API over [`AnnotationService`].
//!
//! Errors are returned as `{"error": {"code", "message"}}` with a status
//! matching the code.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use dialogq_core::dialog::Dialog;

use crate::error::ServiceError;
use crate::model::QuestionnaireDraft;
use crate::service::{AnnotationService, DEFAULT_DUAL_FRACTION};

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::NotClaimed(_) | ServiceError::AlreadySubmitted(_) | ServiceError::DuplicateDialog(_) | ServiceError::NoDualPairs => {
                StatusCode::CONFLICT
            }
            ServiceError::Incomplete(_) | ServiceError::InvalidQuestionnaire(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::CorruptStore { .. } | ServiceError::Io(_) | ServiceError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut error = json!({ "code": self.0.code(), "message": self.0.to_string() });
        if let ServiceError::Incomplete(missing) = &self.0 {
            error["missing"] = json!(missing);
        }
        (status, Json(json!({ "error": error }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidRequest(e.to_string()).into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchRequest {
    dialogs: Vec<Dialog>,
    #[serde(default = "default_dual_fraction")]
    dual_fraction: f64,
    #[serde(default)]
    seed: u64,
}

fn default_dual_fraction() -> f64 {
    DEFAULT_DUAL_FRACTION
}

/// Render payload for one dialog.
#[derive(Debug, Serialize, Deserialize)]
pub struct DialogView {
    pub dialog_id: String,
    pub use_case: String,
    pub turns: Vec<TurnView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnView {
    pub index: usize,
    pub turn_id: String,
    pub user_text: String,
    pub system_text: String,
}

impl From<Dialog> for DialogView {
    fn from(d: Dialog) -> Self {
        Self {
            turns: d
                .turns
                .iter()
                .map(|t| TurnView {
                    index: t.index,
                    turn_id: t.turn_id().to_string(),
                    user_text: t.user_text().to_string(),
                    system_text: t.system_text().to_string(),
                })
                .collect(),
            dialog_id: d.dialog_id,
            use_case: d.use_case,
        }
    }
}

async fn create_batch(State(svc): State<Arc<AnnotationService>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: BatchRequest = parse_body(&body)?;
    let tasks = svc.create_batch(req.dialogs, req.dual_fraction, req.seed)?;
    Ok((StatusCode::CREATED, Json(json!({ "tasks": tasks }))))
}

async fn next_task(
    State(svc): State<Arc<AnnotationService>>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let annotator = query
        .get("annotator")
        .ok_or_else(|| ServiceError::InvalidRequest("missing query parameter `annotator`".into()))?;
    let task = svc.claim_next_task(annotator)?;
    Ok(Json(json!({ "task": task })))
}

async fn get_dialog(State(svc): State<Arc<AnnotationService>>, Path(id): Path<String>) -> ApiResult<Json<DialogView>> {
    Ok(Json(svc.dialog(&id)?.into()))
}

async fn submit(
    State(svc): State<Arc<AnnotationService>>,
    Path(task_id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let draft: QuestionnaireDraft = parse_body(&body)?;
    let record = svc.submit_annotation(&task_id, draft)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn agreement(State(svc): State<Arc<AnnotationService>>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.agreement_report()?))
}

async fn export(State(svc): State<Arc<AnnotationService>>) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({ "rows": svc.export_training_set()? })))
}

/// Builds the API router. With `ui_dir`, other paths serve static files
/// from it.
pub fn router(service: Arc<AnnotationService>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/batches", post(create_batch))
        .route("/tasks/next", get(next_task))
        .route("/dialogs/{id}", get(get_dialog))
        .route("/tasks/{id}/annotation", post(submit))
        .route("/reports/agreement", get(agreement))
        .route("/export/training", get(export))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async {
            ApiError(ServiceError::NotFound {
                what: "route",
                id: String::new(),
            })
        }),
    }
}
