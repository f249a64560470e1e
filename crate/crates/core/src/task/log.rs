//! JSON-lines event logs: a header line followed by one event per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::datasets::DatasetKind;
use crate::models::DimDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Reconstruction,
    SingleDim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub session_id: String,
    pub model_id: String,
    pub task: TaskKind,
    pub dataset: DatasetKind,
    #[serde(rename = "epsilon", alias = "ε")]
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t_threshold: f64,
    #[serde(rename = "N_q")]
    pub n_q: usize,
    pub seed: u64,
    /// `human`, or `agent:<kind>` for simulated users.
    pub source: String,
    /// Slider domains in effect for the session.
    pub dims: Vec<DimDomain>,
    #[serde(default = "default_slider_steps")]
    pub slider_steps: u32,
    #[serde(default)]
    pub practice: bool,
}

fn default_slider_steps() -> u32 {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Start of a question; carries `z` (start) and `z_target`.
    Question,
    SliderMove,
    RadioSelect,
    Snapshot,
    Pause,
    Resume,
    /// Pointer activity without a value change; keeps the session active.
    Heartbeat,
    Solve,
    Skip,
    LabelSet,
    Survey,
    /// Single-dimension answer; details in `payload`.
    Answer,
    /// An action refused by the engine; the reason is in `payload`.
    Reject,
}

impl EventKind {
    /// Events supplied by the participant, as opposed to ones the engine derives.
    pub fn is_input(self) -> bool {
        matches!(
            self,
            EventKind::Question
                | EventKind::SliderMove
                | EventKind::RadioSelect
                | EventKind::Heartbeat
                | EventKind::Skip
                | EventKind::LabelSet
                | EventKind::Survey
                | EventKind::Answer
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Epoch milliseconds.
    pub t_wall: i64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
}

impl Event {
    pub fn new(seq: u64, t_wall: i64, kind: EventKind) -> Self {
        Self {
            seq,
            t_wall,
            kind,
            question: None,
            dim: None,
            value: None,
            z: None,
            d: None,
            z_target: None,
            label: None,
            payload: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            events: Vec::new(),
        }
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), TaskError> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, TaskError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines
            .next()
            .ok_or_else(|| TaskError::Validation {
                index: 0,
                reason: "log has no header line".into(),
            })?;
        let header: LogHeader = serde_json::from_str(&first?).map_err(|e| TaskError::Validation {
            index: 0,
            reason: format!("bad header: {e}"),
        })?;
        let mut events = Vec::new();
        for (line_no, line) in lines {
            let event: Event = serde_json::from_str(&line?).map_err(|e| TaskError::Validation {
                index: events.len(),
                reason: format!("line {}: {e}", line_no + 1),
            })?;
            events.push(event);
        }
        Ok(Self { header, events })
    }

    pub fn from_jsonl(s: &str) -> Result<Self, TaskError> {
        Self::read_jsonl(s.as_bytes())
    }

    /// Structural checks: strictly increasing sequence numbers and
    /// non-decreasing timestamps.
    pub fn check_order(&self) -> Result<(), TaskError> {
        for (i, w) in self.events.windows(2).enumerate() {
            if w[1].t_wall < w[0].t_wall {
                return Err(TaskError::Validation {
                    index: i + 1,
                    reason: format!("timestamp {} precedes {}", w[1].t_wall, w[0].t_wall),
                });
            }
            if w[1].seq <= w[0].seq {
                return Err(TaskError::Validation {
                    index: i + 1,
                    reason: format!("sequence number {} does not follow {}", w[1].seq, w[0].seq),
                });
            }
        }
        Ok(())
    }
}
