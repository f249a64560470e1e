//! Replaying a logged session through the engine.

use super::engine::{Action, Engine, Question, QuestionOutcome};
use super::log::{Event, EventKind, EventLog};
use super::{InstanceDecoder, TaskError};
use crate::models::DimDomain;

/// Largest tolerated difference between a logged and a recomputed distance.
pub const D_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    /// The event stream regenerated from the logged inputs.
    pub log: EventLog,
    pub outcomes: Vec<QuestionOutcome>,
}

fn invalid(index: usize, reason: impl Into<String>) -> TaskError {
    TaskError::Validation {
        index,
        reason: reason.into(),
    }
}

fn field<T: Clone>(v: &Option<T>, index: usize, name: &str) -> Result<T, TaskError> {
    v.clone().ok_or_else(|| invalid(index, format!("missing field {name}")))
}

fn located(index: usize, e: TaskError) -> TaskError {
    match e {
        TaskError::Validation { .. } => e,
        other => invalid(index, other.to_string()),
    }
}

/// Re-runs every logged input through a fresh engine and checks that the
/// regenerated stream matches the log: identical kinds, timestamps and
/// representation values, and distances within [`D_TOLERANCE`].
pub fn replay<D: InstanceDecoder>(log: &EventLog, decoder: D) -> Result<Replay, TaskError> {
    log.check_order()?;
    if log.header.model_id != decoder.model_id() {
        return Err(invalid(
            0,
            format!("log is for model {} but {} was supplied", log.header.model_id, decoder.model_id()),
        ));
    }
    let mut engine = Engine::new(decoder, log.header.clone()).map_err(|e| located(0, e))?;
    for (i, e) in log.events.iter().enumerate() {
        let action = match e.kind {
            EventKind::Question => {
                let z_start = field(&e.z, i, "z")?;
                let z_target = field(&e.z_target, i, "z_target")?;
                let x_target = engine.decoder().decode(&z_target).map_err(|err| located(i, err))?;
                let q = Question {
                    index: field(&e.question, i, "question")?,
                    z_start,
                    z_target,
                    x_target,
                    epsilon: log.header.epsilon,
                    t_threshold: log.header.t_threshold,
                };
                engine.begin_question(q, e.t_wall).map_err(|err| located(i, err))?;
                continue;
            }
            EventKind::SliderMove => Action::SetValue {
                dim: field(&e.dim, i, "dim")?,
                value: field(&e.value, i, "value")?,
            },
            EventKind::RadioSelect => {
                let dim = field(&e.dim, i, "dim")?;
                let value = field(&e.value, i, "value")?;
                let choice = match log.header.dims.get(dim) {
                    Some(DimDomain::Discrete { support }) => support
                        .iter()
                        .position(|&s| s == value)
                        .ok_or_else(|| invalid(i, format!("{value} is not an option of dim {dim}")))?,
                    _ => return Err(invalid(i, format!("dim {dim} is not discrete"))),
                };
                Action::Select { dim, choice }
            }
            EventKind::Skip => Action::Skip,
            EventKind::Heartbeat => Action::Heartbeat,
            EventKind::LabelSet => Action::Label {
                dim: field(&e.dim, i, "dim")?,
                label: field(&e.label, i, "label")?,
            },
            EventKind::Survey | EventKind::Answer => {
                let payload = field(&e.payload, i, "payload")?;
                engine.record(e.kind, e.t_wall, payload).map_err(|err| located(i, err))?;
                continue;
            }
            EventKind::Reject => {
                let action = Action::from_rejection(e).ok_or_else(|| invalid(i, "unreadable rejection"))?;
                match engine.apply(action, e.t_wall) {
                    Err(TaskError::Rejected(_)) => continue,
                    Ok(_) => return Err(invalid(i, "logged rejection is accepted on replay")),
                    Err(err) => return Err(located(i, err)),
                }
            }
            EventKind::Snapshot | EventKind::Pause | EventKind::Resume | EventKind::Solve => continue,
        };
        match engine.apply(action, e.t_wall) {
            Ok(_) => {}
            Err(TaskError::Rejected(reason)) => return Err(invalid(i, format!("logged action is invalid: {reason}"))),
            Err(err) => return Err(located(i, err)),
        }
    }
    let (regenerated, outcomes) = engine.finish();
    compare(&log.events, &regenerated.events)?;
    Ok(Replay {
        log: regenerated,
        outcomes,
    })
}

fn same_d(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= D_TOLERANCE,
        _ => false,
    }
}

fn same_bits(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()),
        _ => false,
    }
}

fn compare(logged: &[Event], regenerated: &[Event]) -> Result<(), TaskError> {
    for (i, (a, b)) in logged.iter().zip(regenerated).enumerate() {
        let mismatch = if a.kind != b.kind {
            Some(format!("expected {:?}, found {:?}", b.kind, a.kind))
        } else if a.t_wall != b.t_wall {
            Some(format!("expected time {}, found {}", b.t_wall, a.t_wall))
        } else if a.question != b.question || a.dim != b.dim || a.label != b.label {
            Some("question, dim or label differs".into())
        } else if a.value.map(f64::to_bits) != b.value.map(f64::to_bits) {
            Some("value differs".into())
        } else if !same_bits(&a.z, &b.z) || !same_bits(&a.z_target, &b.z_target) {
            Some("representation differs".into())
        } else if !same_d(a.d, b.d) {
            Some(format!("distance {:?} does not reproduce {:?}", a.d, b.d))
        } else if a.kind != EventKind::Reject && a.payload != b.payload {
            Some("payload differs".into())
        } else {
            None
        };
        if let Some(reason) = mismatch {
            return Err(invalid(i, reason));
        }
    }
    if logged.len() != regenerated.len() {
        let i = logged.len().min(regenerated.len());
        return Err(invalid(
            i,
            format!("log has {} events, replay produces {}", logged.len(), regenerated.len()),
        ));
    }
    Ok(())
}
