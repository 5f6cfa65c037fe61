//! HTTP front end for the review queue.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use dataref::review::{Decision, ReviewError, ReviewItem, ReviewService, Verdict, VerdictRequest};
use serde::{Deserialize, Serialize};

type Shared = Arc<ReviewService>;

#[derive(Debug, Deserialize)]
pub struct QueueParams {
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub item_id: String,
    pub decision: Decision,
    pub timestamp: DateTime<Utc>,
    /// Verdicts in the log after this one was appended.
    pub log_len: usize,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match e {
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::InvalidSpan { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::CorruptLog { .. } | ReviewError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/healthz", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/queue", get(queue))
        .route("/items/{item_id}", get(item))
        .route("/verdicts", post(submit))
        .route("/exports/bibliography", get(bibliography))
        .route("/exports/mentions", get(mentions))
        .route("/exports/training", get(training))
        .with_state(service)
}

async fn queue(State(s): State<Shared>, Query(p): Query<QueueParams>) -> Json<Vec<ReviewItem>> {
    Json(s.read(|st| st.queue(p.limit).into_iter().cloned().collect()))
}

async fn item(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<ItemView>, ApiError> {
    s.read(|st| {
        st.item(&id).map(|i| ItemView { item: i.clone(), verdict: st.verdict(&id).cloned() })
    })
    .map(Json)
    .ok_or_else(|| ReviewError::NotFound(id).into())
}

async fn submit(State(s): State<Shared>, Json(req): Json<VerdictRequest>) -> Result<(StatusCode, Json<Ack>), ApiError> {
    let v = tokio::task::spawn_blocking(move || {
        let v = s.submit(req, Utc::now())?;
        let log_len = s.read(|st| st.log_len());
        Ok::<_, ReviewError>(Ack { item_id: v.item_id, decision: v.decision, timestamp: v.timestamp, log_len })
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(v)))
}

async fn bibliography(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.read(|st| st.export_bibliography()))
}

async fn mentions(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.read(|st| st.export_mentions()))
}

async fn training(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.read(|st| st.export_training()))
}
