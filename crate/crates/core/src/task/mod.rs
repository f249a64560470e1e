//! Interactive reconstruction sessions: distances, question sampling, the
//! action engine, JSON-lines event logs and replay.

mod distance;
mod engine;
mod log;
mod replay;

use std::sync::Arc;

pub use distance::{bray_curtis, distance, iou_distance, sinelines_distance, MNIST_THRESHOLD, SINELINES_TOLERANCE};
pub use engine::{
    new_question, Action, Engine, Question, QuestionOutcome, StepResult, TaskParams, INACTIVITY_MS,
    MAX_QUESTION_DRAWS, SNAPSHOT_INTERVAL_MS,
};
pub use log::{Event, EventKind, EventLog, LogHeader, TaskKind};
pub use replay::{replay, Replay, D_TOLERANCE};

use crate::datasets::{DatasetKind, Instance};
use crate::models::{GenerativeModel, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid log at event {index}: {reason}")]
    Validation { index: usize, reason: String },
    #[error("action rejected: {0}")]
    Rejected(String),
    #[error("invalid session state: {0}")]
    State(String),
    #[error("no unsolved question found in {0} draws")]
    SamplerExhausted(usize),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that turns a full representation value into an instance.
pub trait InstanceDecoder {
    fn decode(&self, z: &[f64]) -> Result<Instance, TaskError>;
    fn dataset(&self) -> DatasetKind;
    fn model_id(&self) -> &str;
}

impl InstanceDecoder for GenerativeModel {
    fn decode(&self, z: &[f64]) -> Result<Instance, TaskError> {
        Ok(GenerativeModel::decode(self, z)?)
    }

    fn dataset(&self) -> DatasetKind {
        self.dataset
    }

    fn model_id(&self) -> &str {
        &self.id
    }
}

impl<T: InstanceDecoder + ?Sized> InstanceDecoder for &T {
    fn decode(&self, z: &[f64]) -> Result<Instance, TaskError> {
        (**self).decode(z)
    }

    fn dataset(&self) -> DatasetKind {
        (**self).dataset()
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<T: InstanceDecoder + ?Sized> InstanceDecoder for Arc<T> {
    fn decode(&self, z: &[f64]) -> Result<Instance, TaskError> {
        (**self).decode(z)
    }

    fn dataset(&self) -> DatasetKind {
        (**self).dataset()
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

#[cfg(test)]
mod tests;
