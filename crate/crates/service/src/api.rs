//! HTTP JSON API.
//!
//! - `POST /sessions` `{participant_id}` -> session
//! - `GET /feed/{session_id}` -> feed view
//! - `POST /events/{session_id}` `{events: [...]}` or `[...]` -> ack
//! - `GET /export?condition=&from=&to=` with `Authorization: Bearer <token>`
//!   -> line-delimited JSON

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use crate::experiment::Experiment;
use crate::model::{EventInput, ExportFilter};
use crate::ServiceError;

#[derive(Deserialize)]
struct NewSession {
    participant_id: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EventBatch {
    Wrapped { events: Vec<EventInput> },
    Bare(Vec<EventInput>),
}

impl EventBatch {
    fn into_events(self) -> Vec<EventInput> {
        match self {
            EventBatch::Wrapped { events } | EventBatch::Bare(events) => events,
        }
    }
}

type Shared = Arc<Experiment>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn create_session(
    State(exp): State<Shared>,
    body: Result<Json<NewSession>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let session = blocking(move || exp.create_session(&req.participant_id)).await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_feed(State(exp): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(exp.get_feed(&id)?).into_response())
}

async fn post_events(
    State(exp): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<EventBatch>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let Json(batch) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let ack = blocking(move || exp.record_events(&id, batch.into_events())).await?;
    Ok(Json(ack).into_response())
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

async fn export(
    State(exp): State<Shared>,
    headers: HeaderMap,
    filter: Result<Query<ExportFilter>, QueryRejection>,
) -> Result<Response, ServiceError> {
    exp.check_admin(bearer(&headers))?;
    let Query(filter) = filter.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let token = bearer(&headers).map(str::to_string);
    let body = blocking(move || exp.export(token.as_deref(), &filter)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("no such route".into())
}

pub fn router(experiment: Arc<Experiment>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/feed/{session_id}", get(get_feed))
        .route("/events/{session_id}", post(post_events))
        .route("/export", get(export))
        .fallback(fallback)
        .with_state(experiment)
}
