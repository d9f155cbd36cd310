//! HTTP front end for [`SubjectiveService`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/session` | `{"subject_id"}` | `{"session_id", "total"}` |
//! | GET | `/session/{id}/next` | | trial or completion |
//! | POST | `/session/{id}/score` | `{"token", "raw_score"}` | `{"accepted", "remaining"}` |
//! | GET | `/results/summary` | | summary table; `?format=markdown` for text |
//! | GET | `/images/{handle}` | | image bytes |
//!
//! Errors come back as `{"error": message}` with 400/422 for invalid input,
//! 404 for unknown ids and 409 for conflicts.

use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hvsjnd::subjective::{render_table, SubjectiveService};
use hvsjnd::Error;
use serde::{Deserialize, Serialize};

pub type SharedService = Arc<RwLock<SubjectiveService>>;

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub subject_id: String,
}

#[derive(Debug, Deserialize)]
pub struct SubmitScore {
    pub token: String,
    pub raw_score: i64,
}

#[derive(Debug, Deserialize)]
pub struct SummaryQuery {
    pub format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::InvalidValue(_) | Error::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("request failed: {}", self.0);
        }
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

fn poisoned() -> ApiError {
    ApiError(Error::Conflict("service state unavailable after an earlier failure".into()))
}

async fn create_session(
    State(s): State<SharedService>,
    Json(body): Json<CreateSession>,
) -> Result<impl IntoResponse, ApiError> {
    let created = s.write().map_err(|_| poisoned())?.create_session(&body.subject_id)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn next_pair(State(s): State<SharedService>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.read().map_err(|_| poisoned())?.next_pair(&id)?))
}

async fn submit_score(
    State(s): State<SharedService>,
    Path(id): Path<String>,
    Json(body): Json<SubmitScore>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.write().map_err(|_| poisoned())?.submit_score(&id, &body.token, body.raw_score)?))
}

async fn summary(State(s): State<SharedService>, Query(q): Query<SummaryQuery>) -> Result<Response, ApiError> {
    let table = s.read().map_err(|_| poisoned())?.summary();
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(table).into_response()),
        Some("markdown") => Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], render_table(&table)).into_response()),
        Some(other) => Err(Error::InvalidValue(format!("unknown format `{other}` (json, markdown)")).into()),
    }
}

async fn image(State(s): State<SharedService>, Path(handle): Path<String>) -> Result<Response, ApiError> {
    let (content_type, bytes) = s.read().map_err(|_| poisoned())?.image(&handle)?;
    Ok((
        [(header::CONTENT_TYPE, content_type), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")],
        bytes.as_ref().clone(),
    )
        .into_response())
}

pub fn router(service: SharedService) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/next", get(next_pair))
        .route("/session/{id}/score", post(submit_score))
        .route("/results/summary", get(summary))
        .route("/images/{handle}", get(image))
        .with_state(service)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, service: SubjectiveService) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(RwLock::new(service)))).await
}
