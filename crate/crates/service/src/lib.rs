//! Annotation service: serves prompts to annotators in the experiment's
//! ranked order, records their votes and reports live statistics.
//!
//! Routes:
//!
//! - `GET  /api/experiments`
//! - `GET  /api/experiments/{id}/next?annotator=<id>`
//! - `POST /api/experiments/{id}/votes`
//! - `GET  /api/experiments/{id}/stats`
//! - `GET  /api/experiments/{id}/export`
//!
//! Completions are served as left/right with model identities withheld;
//! the stored position map turns a left/right choice back into A/B.

mod error;
mod routes;
mod service;

pub use error::ServiceError;
pub use routes::{router, serve};
pub use service::{
    AnnotationService, AssignmentRecord, ExperimentSummary, NextResponse, Payload, Progress,
    ScreenChoice, StatsResponse, SubmitRequest, SubmitResponse,
};
