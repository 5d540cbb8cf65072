//! HTTP routes over the state machine.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bwslex::formats::write_annotations;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::log::EventLog;
use crate::state::{Ack, AnnotationService, LogEvent, NewSession, NextTuple, Prepared, ResponseRequest, StatusReport};

/// Service and log behind one lock, so each append and the state change it
/// records happen together.
pub struct AppState {
    inner: Mutex<(AnnotationService, EventLog)>,
}

impl AppState {
    pub fn new(service: AnnotationService, log: EventLog) -> Arc<Self> {
        Arc::new(Self {
            inner: Mutex::new((service, log)),
        })
    }

    fn with<T>(&self, f: impl FnOnce(&mut AnnotationService, &mut EventLog) -> T) -> T {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let (service, log) = &mut *guard;
        f(service, log)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        if e.status() >= 500 {
            tracing::error!(error = %e, "request failed");
        }
        Self {
            status: StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request".into(),
            message: e.body_text(),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request".into(),
            message: e.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                code: self.code,
                message: self.message,
            }),
        )
            .into_response()
    }
}

#[derive(Debug, Deserialize)]
struct NewSessionQuery {
    dimension: String,
    annotator_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_discarded: bool,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session/new", get(new_session))
        .route("/session/{id}/next", get(next_tuple))
        .route("/session/{id}/response", post(submit_response))
        .route("/export/annotations", get(export_annotations))
        .route("/status", get(status))
        .fallback(|| async {
            ApiError {
                status: StatusCode::NOT_FOUND,
                code: "not_found".into(),
                message: "no such endpoint".into(),
            }
        })
        .with_state(state)
}

async fn new_session(
    State(state): State<Arc<AppState>>,
    query: Result<Query<NewSessionQuery>, QueryRejection>,
) -> Result<Json<NewSession>, ApiError> {
    let Query(query) = query?;
    let payload = state.with(|service, log| {
        let event = service.prepare_session(&query.dimension, query.annotator_id.as_deref())?;
        log.append(&event)?;
        service.apply(&event)?;
        let LogEvent::SessionOpened { session_id, .. } = &event else {
            unreachable!("prepare_session yields a session event")
        };
        service.session_payload(session_id)
    })?;
    Ok(Json(payload))
}

async fn next_tuple(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<NextTuple>, ApiError> {
    Ok(Json(state.with(|service, _| service.next_tuple(&id))?))
}

async fn submit_response(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ResponseRequest>, JsonRejection>,
) -> Result<Json<Ack>, ApiError> {
    let Json(request) = body?;
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .ok();
    let ack = state.with(|service, log| match service.prepare_response(&id, &request, now)? {
        Prepared::Repeat(ack) => Ok::<_, ServiceError>(ack),
        Prepared::Event(event) => {
            log.append(&event)?;
            Ok(service.apply(&event)?.expect("responses produce an ack"))
        }
    })?;
    Ok(Json(ack))
}

async fn export_annotations(
    State(state): State<Arc<AppState>>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query?;
    let rows = state.with(|service, _| service.export(query.include_discarded));
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], write_annotations(&rows)).into_response())
}

async fn status(State(state): State<Arc<AppState>>) -> Json<StatusReport> {
    Json(state.with(|service, _| service.status()))
}

/// Binds `addr` and serves until the task is cancelled.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(state)).await
}
