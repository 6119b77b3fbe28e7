use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use prefeval_core::analysis::Report;

use crate::service::{
    AnnotationService, ExperimentSummary, NextResponse, StatsResponse, SubmitRequest,
    SubmitResponse,
};
use crate::ServiceError;

type Shared = Arc<AnnotationService>;

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn blocking<T, F>(service: Shared, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&AnnotationService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn list(State(s): State<Shared>) -> Json<Vec<ExperimentSummary>> {
    Json(s.list())
}

async fn next(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextResponse>, ServiceError> {
    s.next_assignment(&id, &q.annotator).map(Json)
}

async fn vote(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<SubmitRequest>,
) -> Result<Json<SubmitResponse>, ServiceError> {
    blocking(s, move |s| s.submit_vote(&id, &req))
        .await
        .map(Json)
}

async fn stats(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<StatsResponse>, ServiceError> {
    blocking(s, move |s| s.live_stats(&id)).await.map(Json)
}

async fn export(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<Report>, ServiceError> {
    blocking(s, move |s| s.export(&id)).await.map(Json)
}

/// API router, with static files from `ui_dir` served for every other path.
pub fn router(service: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/experiments", get(list))
        .route("/api/experiments/{id}/next", get(next))
        .route("/api/experiments/{id}/votes", post(vote))
        .route("/api/experiments/{id}/stats", get(stats))
        .route("/api/experiments/{id}/export", get(export))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(
    addr: SocketAddr,
    service: AnnotationService,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(service), ui_dir)).await
}
