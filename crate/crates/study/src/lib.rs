//! Study service: serves decode requests, assigns conditions, stores event
//! logs and surveys, and exports recomputable results.

pub mod client;
pub mod config;
pub mod export;
pub mod registry;
pub mod server;
pub mod store;

use irecon_core::analytics::AnalyticsError;
use irecon_core::models::ModelError;
use irecon_core::single_dim::SingleDimError;
use irecon_core::task::TaskError;

pub use client::{simulate_session, Client, HttpDecoder};
pub use config::{Assignment, ConditionConfig, ModelOrder, StudyConfig};
pub use export::{Bundle, Results, StageLog};
pub use registry::{Registry, ServedModel};
pub use server::{router, AppState};
pub use store::{AppendReport, SessionRecord, SessionStatus, StageInfo, Store, MAX_BATCH};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("gone: {0}")]
    Gone(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("batch too large: {0}")]
    TooLarge(String),
    #[error("out of domain: {0}")]
    Domain(String),
    #[error("no study loaded")]
    Unavailable,
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error(transparent)]
    Transport(#[from] reqwest::Error),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    SingleDim(#[from] SingleDimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StudyError {
    pub fn status(&self) -> u16 {
        match self {
            StudyError::NotFound(_) => 404,
            StudyError::Conflict(_) => 409,
            StudyError::Gone(_) => 410,
            StudyError::BadRequest(_) | StudyError::Json(_) => 400,
            StudyError::TooLarge(_) => 413,
            StudyError::Domain(_) => 422,
            StudyError::Unavailable => 503,
            StudyError::Http { status, .. } => *status,
            StudyError::Task(TaskError::Validation { .. } | TaskError::Rejected(_) | TaskError::State(_)) => 400,
            StudyError::Analytics(AnalyticsError::Insufficient(_)) => 409,
            StudyError::SingleDim(SingleDimError::NoSuchDim(_) | SingleDimError::Discrete(_)) => 422,
            _ => 500,
        }
    }
}

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}
