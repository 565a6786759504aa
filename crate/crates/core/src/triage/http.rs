use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{ListFilter, TriageError, TriageStore, VerdictRequest, DEFAULT_CONTEXT_PX};

type Shared = Arc<TriageStore>;

impl IntoResponse for TriageError {
    fn into_response(self) -> Response {
        let status = match &self {
            TriageError::NotFound(_) => StatusCode::NOT_FOUND,
            TriageError::SourceGone(..) => StatusCode::GONE,
            TriageError::BadRequest(_) => StatusCode::BAD_REQUEST,
            TriageError::Decode(_) | TriageError::Io(..) | TriageError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, TriageError> + Send + 'static,
) -> Result<T, TriageError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| TriageError::Io("worker".into(), std::io::Error::other(e)))?
}

async fn list(State(store): State<Shared>, Query(filter): Query<ListFilter>) -> Result<Response, TriageError> {
    Ok(Json(store.list(&filter)?).into_response())
}

async fn one(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, TriageError> {
    Ok(Json(store.get(&id)?).into_response())
}

#[derive(Deserialize)]
struct CropQuery {
    context: Option<u32>,
}

async fn crop(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<CropQuery>,
) -> Result<Response, TriageError> {
    let context = q.context.unwrap_or(DEFAULT_CONTEXT_PX);
    let png = blocking(move || store.crop_png(&id, context)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn verdict(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<VerdictRequest>,
) -> Result<Response, TriageError> {
    let rec = blocking(move || store.record_verdict(&id, req)).await?;
    Ok(Json(rec).into_response())
}

async fn export(State(store): State<Shared>) -> Response {
    let body = serde_json::to_vec_pretty(&store.export_elevated()).expect("geojson serializes");
    ([(header::CONTENT_TYPE, "application/geo+json")], body).into_response()
}

async fn stats(State(store): State<Shared>) -> Response {
    Json(store.stats()).into_response()
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/api/candidates", get(list))
        .route("/api/candidates/{id}", get(one))
        .route("/api/candidates/{id}/crop", get(crop))
        .route("/api/candidates/{id}/verdict", post(verdict))
        .route("/api/export/elevated", get(export))
        .route("/api/stats", get(stats))
        .with_state(store)
}

/// Serves the API until the process is stopped. `ready` receives the bound
/// address, which matters when binding port 0.
pub async fn serve(
    store: Shared,
    bind: SocketAddr,
    ready: Option<tokio::sync::oneshot::Sender<SocketAddr>>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    log::info!("review API listening on http://{addr}");
    if let Some(tx) = ready {
        let _ = tx.send(addr);
    }
    axum::serve(listener, router(store)).await
}
