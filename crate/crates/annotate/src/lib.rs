//! JSON API over an [`AnnotationStore`].
//!
//! | route | response |
//! |---|---|
//! | `GET /batches` | batch ids |
//! | `GET /batches/{id}/next?annotator=` | next task payload, or 204 when the annotator is done |
//! | `POST /annotations` | stored record; 201 when new, 200 when it supersedes |
//! | `GET /batches/{id}/report[?mode=binary]` | agreement report, 409 until complete |
//!
//! Payloads never carry the hidden origin flag or the answer key.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lrqa_core::annotation::{AnnotationError, AnnotationRecord, AnnotationStore, KappaMode, StoreError};
use serde::Deserialize;
use serde_json::json;

#[derive(Clone)]
struct AppState {
    store: Arc<AnnotationStore>,
    default_mode: KappaMode,
}

/// Error body: `{"error": "..."}`.
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::Annotation(a) => match a {
                AnnotationError::UnknownTask(_) | AnnotationError::UnknownBatch(_) => StatusCode::NOT_FOUND,
                AnnotationError::InvalidReasons(_) | AnnotationError::InvalidRecord(_) => StatusCode::UNPROCESSABLE_ENTITY,
                AnnotationError::Incomplete { .. } | AnnotationError::InsufficientAnnotators => StatusCode::CONFLICT,
                AnnotationError::InsufficientRejects { .. } => StatusCode::BAD_REQUEST,
            },
            StoreError::BadBatchId(_) => StatusCode::BAD_REQUEST,
            StoreError::BatchConflict(_) => StatusCode::CONFLICT,
            StoreError::Io(_) | StoreError::File(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, StoreError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(store: Arc<AnnotationStore>, default_mode: KappaMode) -> Router {
    Router::new()
        .route("/batches", get(list_batches))
        .route("/batches/{id}/next", get(next_task))
        .route("/batches/{id}/report", get(report))
        .route("/annotations", post(submit))
        .with_state(AppState { store, default_mode })
}

async fn list_batches(State(st): State<AppState>) -> Json<Vec<String>> {
    Json(st.store.batch_ids())
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_task(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    let annotator = q.annotator.filter(|a| !a.trim().is_empty());
    let annotator = annotator.ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "annotator query parameter is required".into()))?;
    let payload = blocking(move || st.store.next_task(&id, &annotator)).await?;
    Ok(match payload {
        Some(p) => Json(p).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(State(st): State<AppState>, body: Result<Json<AnnotationRecord>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(mut rec) = body.map_err(|e| ApiError(e.status(), e.body_text()))?;
    if rec.timestamp_ms == 0 {
        rec.timestamp_ms = chrono::Utc::now().timestamp_millis().max(0) as u64;
    }
    let stored = rec.clone();
    let outcome = blocking(move || st.store.record(rec)).await?;
    let status = if outcome.superseded { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(stored)).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    mode: Option<KappaMode>,
}

async fn report(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    let mode = q.mode.unwrap_or(st.default_mode);
    let report = blocking(move || st.store.report(&id, mode)).await?;
    Ok(Json(report).into_response())
}

/// Serves until Ctrl-C.
pub async fn serve(store: Arc<AnnotationStore>, default_mode: KappaMode, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store, default_mode))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
