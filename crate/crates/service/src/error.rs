use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

use crate::service::NextResponse;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),

    #[error("bad request: {0}")]
    BadRequest(String),

    /// The vote was rejected; `reissued` is the assignment the client
    /// should display instead.
    #[error("conflict: {message}")]
    Conflict {
        message: String,
        reissued: Box<NextResponse>,
    },

    #[error(transparent)]
    Core(#[from] prefeval_core::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, body) = match &self {
            ServiceError::NotFound(m) => (
                StatusCode::NOT_FOUND,
                json!({"error": "not_found", "message": m}),
            ),
            ServiceError::BadRequest(m) => (
                StatusCode::BAD_REQUEST,
                json!({"error": "bad_request", "message": m}),
            ),
            ServiceError::Conflict { message, reissued } => (
                StatusCode::CONFLICT,
                json!({"error": "conflict", "message": message, "reissued": reissued}),
            ),
            ServiceError::Core(prefeval_core::Error::InsufficientData(m)) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "insufficient_data", "message": m}),
            ),
            ServiceError::Core(e) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": "internal", "message": e.to_string()}),
            ),
            ServiceError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": "internal", "message": m}),
            ),
        };
        (status, Json(body)).into_response()
    }
}
