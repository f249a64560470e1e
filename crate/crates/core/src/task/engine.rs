//! The reconstruction task state machine.
//!
//! The engine consumes participant actions with wall-clock timestamps, decodes
//! and scores the current representation, keeps the active-time clock, and
//! appends every input and derived event to the session log.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::log::{Event, EventKind, EventLog, LogHeader};
use super::{distance, InstanceDecoder, TaskError};
use crate::datasets::{DatasetKind, Instance};
use crate::models::{squared_error, DimDomain, RepresentationSpec};

/// Gaps without events longer than this pause the active-time clock.
pub const INACTIVITY_MS: i64 = 3000;
/// Snapshot cadence while a slider keeps moving in one direction.
pub const SNAPSHOT_INTERVAL_MS: i64 = 100;
/// Attempts at drawing a question that is not already solved.
pub const MAX_QUESTION_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub epsilon: f64,
    /// Active seconds before skipping is allowed.
    pub t_threshold: f64,
    pub n_q: usize,
}

impl TaskParams {
    pub fn for_dataset(kind: DatasetKind) -> Self {
        if kind == DatasetKind::Mnist {
            Self {
                epsilon: 0.25,
                t_threshold: 45.0,
                n_q: 7,
            }
        } else {
            Self {
                epsilon: 0.1,
                t_threshold: 30.0,
                n_q: 5,
            }
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(TaskError::Config(format!("ε = {} must lie in (0, 1)", self.epsilon)));
        }
        if !(self.t_threshold > 0.0) {
            return Err(TaskError::Config(format!("T = {} must be positive", self.t_threshold)));
        }
        if self.n_q == 0 {
            return Err(TaskError::Config("N_q must be at least 1".into()));
        }
        Ok(())
    }

    pub fn threshold_ms(&self) -> i64 {
        (self.t_threshold * 1000.0).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub index: usize,
    pub z_start: Vec<f64>,
    pub z_target: Vec<f64>,
    pub x_target: Instance,
    pub epsilon: f64,
    pub t_threshold: f64,
}

/// Draws a question whose start is not already within `ε` of the target.
pub fn new_question(
    decoder: &impl InstanceDecoder,
    spec: &RepresentationSpec,
    params: &TaskParams,
    index: usize,
    rng: &mut impl Rng,
) -> Result<Question, TaskError> {
    params.validate()?;
    for _ in 0..MAX_QUESTION_DRAWS {
        let z_start = spec.sample(rng)?;
        let z_target = spec.sample(rng)?;
        if z_start == z_target {
            continue;
        }
        let x_target = decoder.decode(&z_target)?;
        let x_start = decoder.decode(&z_start)?;
        if distance(decoder.dataset(), &x_start, &x_target)? > params.epsilon {
            return Ok(Question {
                index,
                z_start,
                z_target,
                x_target,
                epsilon: params.epsilon,
                t_threshold: params.t_threshold,
            });
        }
    }
    Err(TaskError::SamplerExhausted(MAX_QUESTION_DRAWS))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    SetValue { dim: usize, value: f64 },
    Select { dim: usize, choice: usize },
    Skip,
    Heartbeat,
    Label { dim: usize, label: String },
}

impl Action {
    fn name(&self) -> &'static str {
        match self {
            Action::SetValue { .. } => "slider_move",
            Action::Select { .. } => "radio_select",
            Action::Skip => "skip",
            Action::Heartbeat => "heartbeat",
            Action::Label { .. } => "label_set",
        }
    }

    /// The action a `reject` event records.
    pub(crate) fn from_rejection(e: &Event) -> Option<Action> {
        let payload = e.payload.as_ref()?;
        match payload.get("action")?.as_str()? {
            "slider_move" => Some(Action::SetValue {
                dim: e.dim?,
                value: e.value?,
            }),
            "radio_select" => Some(Action::Select {
                dim: e.dim?,
                choice: e.value? as usize,
            }),
            "skip" => Some(Action::Skip),
            _ => None,
        }
    }
}

/// Outcome of one question, computed live and again on replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub index: usize,
    pub solved: bool,
    pub skipped: bool,
    pub active_ms: i64,
    /// Slider movement in full slider widths; discrete changes count 1.
    pub slide_distance: f64,
    /// Integral of the squared instance error over active seconds.
    pub error_auc: f64,
    pub start_d: f64,
    pub final_d: f64,
    pub final_z: Vec<f64>,
    pub actions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub d: f64,
    pub solved: bool,
    pub closed: bool,
    pub active_ms: i64,
}

#[derive(Debug, Clone)]
struct OpenQuestion {
    index: usize,
    z: Vec<f64>,
    z_target: Vec<f64>,
    x_target: Instance,
    d: f64,
    err: f64,
    start_d: f64,
    active_ms: i64,
    last_t: i64,
    last_move: Option<(usize, i8)>,
    last_snapshot_t: i64,
    snap_active_ms: i64,
    snap_err: f64,
    slide: f64,
    auc: f64,
    actions: usize,
}

impl OpenQuestion {
    fn integrate_to_now(&mut self) {
        let dt = (self.active_ms - self.snap_active_ms) as f64 / 1000.0;
        self.auc += dt * (self.snap_err + self.err) / 2.0;
        self.snap_active_ms = self.active_ms;
        self.snap_err = self.err;
    }

    fn outcome(&self, solved: bool, skipped: bool) -> QuestionOutcome {
        QuestionOutcome {
            index: self.index,
            solved,
            skipped,
            active_ms: self.active_ms,
            slide_distance: self.slide,
            error_auc: self.auc,
            start_d: self.start_d,
            final_d: self.d,
            final_z: self.z.clone(),
            actions: self.actions,
        }
    }
}

pub struct Engine<D> {
    decoder: D,
    log: EventLog,
    next_seq: u64,
    last_t: Option<i64>,
    open: Option<OpenQuestion>,
    outcomes: Vec<QuestionOutcome>,
    threshold_ms: i64,
}

impl<D: InstanceDecoder> Engine<D> {
    pub fn new(decoder: D, header: LogHeader) -> Result<Self, TaskError> {
        if header.dataset != decoder.dataset() {
            return Err(TaskError::Config(format!(
                "log is for {} but the decoder produces {}",
                header.dataset,
                decoder.dataset()
            )));
        }
        TaskParams {
            epsilon: header.epsilon,
            t_threshold: header.t_threshold,
            n_q: header.n_q,
        }
        .validate()?;
        Ok(Self {
            threshold_ms: (header.t_threshold * 1000.0).round() as i64,
            decoder,
            log: EventLog::new(header),
            next_seq: 0,
            last_t: None,
            open: None,
            outcomes: Vec::new(),
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.log.header
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn outcomes(&self) -> &[QuestionOutcome] {
        &self.outcomes
    }

    pub fn decoder(&self) -> &D {
        &self.decoder
    }

    pub fn has_open_question(&self) -> bool {
        self.open.is_some()
    }

    pub fn current_z(&self) -> Option<&[f64]> {
        self.open.as_ref().map(|q| q.z.as_slice())
    }

    pub fn target_z(&self) -> Option<&[f64]> {
        self.open.as_ref().map(|q| q.z_target.as_slice())
    }

    pub fn current_d(&self) -> Option<f64> {
        self.open.as_ref().map(|q| q.d)
    }

    pub fn active_ms(&self) -> Option<i64> {
        self.open.as_ref().map(|q| q.active_ms)
    }

    pub fn last_t(&self) -> Option<i64> {
        self.last_t
    }

    pub fn questions_started(&self) -> usize {
        self.outcomes.len() + usize::from(self.open.is_some())
    }

    fn push(&mut self, mut e: Event) {
        e.seq = self.next_seq;
        self.next_seq += 1;
        self.log.events.push(e);
    }

    fn check_time(&self, t: i64) -> Result<(), TaskError> {
        match self.last_t {
            Some(last) if t < last => Err(TaskError::Validation {
                index: self.log.events.len(),
                reason: format!("timestamp {t} precedes {last}"),
            }),
            _ => Ok(()),
        }
    }

    /// Moves the question clock to `t`, inserting a pause/resume pair when the
    /// participant has been idle longer than the inactivity limit.
    fn advance(&mut self, t: i64) {
        let Some(q) = self.open.as_mut() else {
            return;
        };
        let gap = t - q.last_t;
        let mut derived = Vec::new();
        if gap > INACTIVITY_MS {
            q.active_ms += INACTIVITY_MS;
            let mut pause = Event::new(0, q.last_t + INACTIVITY_MS, EventKind::Pause);
            pause.question = Some(q.index);
            let mut resume = Event::new(0, t, EventKind::Resume);
            resume.question = Some(q.index);
            derived.extend([pause, resume]);
        } else {
            q.active_ms += gap;
        }
        q.last_t = t;
        for e in derived {
            self.push(e);
        }
    }

    fn snapshot(&mut self, t: i64) {
        let q = self.open.as_mut().expect("open question");
        q.integrate_to_now();
        q.last_snapshot_t = t;
        let mut e = Event::new(0, t, EventKind::Snapshot);
        e.question = Some(q.index);
        e.z = Some(q.z.clone());
        e.d = Some(q.d);
        self.push(e);
    }

    pub fn begin_question(&mut self, q: Question, t: i64) -> Result<f64, TaskError> {
        if self.open.is_some() {
            return Err(TaskError::State("previous question is still open".into()));
        }
        self.check_time(t)?;
        self.validate_full(&q.z_start)?;
        self.validate_full(&q.z_target)?;
        let x = self.decoder.decode(&q.z_start)?;
        let kind = self.decoder.dataset();
        let d = distance(kind, &x, &q.x_target)?;
        let err = squared_error(&x.data, &q.x_target.data);
        let mut e = Event::new(0, t, EventKind::Question);
        e.question = Some(q.index);
        e.z = Some(q.z_start.clone());
        e.z_target = Some(q.z_target.clone());
        e.d = Some(d);
        self.push(e);
        self.last_t = Some(t);
        self.open = Some(OpenQuestion {
            index: q.index,
            z: q.z_start,
            z_target: q.z_target,
            x_target: q.x_target,
            d,
            err,
            start_d: d,
            active_ms: 0,
            last_t: t,
            last_move: None,
            last_snapshot_t: t,
            snap_active_ms: 0,
            snap_err: err,
            slide: 0.0,
            auc: 0.0,
            actions: 0,
        });
        self.snapshot(t);
        Ok(d)
    }

    fn validate_full(&self, z: &[f64]) -> Result<(), TaskError> {
        let dims = &self.log.header.dims;
        if z.len() != dims.len() {
            return Err(TaskError::Domain(format!("expected {} values, got {}", dims.len(), z.len())));
        }
        for (i, (v, d)) in z.iter().zip(dims).enumerate() {
            if !d.contains(*v) {
                return Err(TaskError::Domain(format!("dim {i}: {v} outside its domain")));
            }
        }
        Ok(())
    }

    fn check_action(&self, action: &Action, q: &OpenQuestion) -> Result<(), String> {
        let dims = &self.log.header.dims;
        match action {
            Action::SetValue { dim, value } => match dims.get(*dim) {
                Some(d @ DimDomain::Continuous { .. }) if d.contains(*value) => Ok(()),
                Some(DimDomain::Continuous { lo, hi, .. }) => Err(format!("{value} outside [{lo}, {hi}]")),
                Some(DimDomain::Discrete { .. }) => Err(format!("dim {dim} is discrete")),
                None => Err(format!("no dim {dim}")),
            },
            Action::Select { dim, choice } => match dims.get(*dim) {
                Some(DimDomain::Discrete { support }) if *choice < support.len() => Ok(()),
                Some(DimDomain::Discrete { support }) => {
                    Err(format!("choice {choice} outside {} options", support.len()))
                }
                Some(DimDomain::Continuous { .. }) => Err(format!("dim {dim} is continuous")),
                None => Err(format!("no dim {dim}")),
            },
            Action::Skip if q.active_ms < self.threshold_ms => Err(format!(
                "skip at {} ms active time is before the {} ms threshold",
                q.active_ms, self.threshold_ms
            )),
            Action::Label { dim, .. } if *dim >= dims.len() => Err(format!("no dim {dim}")),
            _ => Ok(()),
        }
    }

    fn reject(&mut self, action: &Action, t: i64, reason: String) -> TaskError {
        let mut e = Event::new(0, t, EventKind::Reject);
        e.question = self.open.as_ref().map(|q| q.index);
        match action {
            Action::SetValue { dim, value } => {
                e.dim = Some(*dim);
                e.value = Some(*value);
            }
            Action::Select { dim, choice } => {
                e.dim = Some(*dim);
                e.value = Some(*choice as f64);
            }
            _ => {}
        }
        e.payload = Some(json!({ "action": action.name(), "reason": reason }));
        self.push(e);
        TaskError::Rejected(reason)
    }

    /// Applies one participant action at wall time `t` (epoch ms).
    ///
    /// Rejected actions are logged and returned as [`TaskError::Rejected`];
    /// actions outside an open question are refused without logging.
    pub fn apply(&mut self, action: Action, t: i64) -> Result<StepResult, TaskError> {
        self.check_time(t)?;
        if let Action::Label { dim, label } = &action {
            if self.open.is_none() {
                if *dim >= self.log.header.dims.len() {
                    return Err(TaskError::Rejected(format!("no dim {dim}")));
                }
                self.last_t = Some(t);
                let mut e = Event::new(0, t, EventKind::LabelSet);
                e.dim = Some(*dim);
                e.label = Some(label.clone());
                self.push(e);
                return Ok(StepResult {
                    d: f64::NAN,
                    solved: false,
                    closed: true,
                    active_ms: 0,
                });
            }
        }
        let Some(q) = self.open.as_ref() else {
            return Err(TaskError::State(format!("{} with no open question", action.name())));
        };
        let index = q.index;
        self.advance(t);
        self.last_t = Some(t);
        let q = self.open.as_ref().expect("open question");
        if let Err(reason) = self.check_action(&action, q) {
            return Err(self.reject(&action, t, reason));
        }
        let dims = self.log.header.dims.clone();
        let mut new_z = None;
        match &action {
            Action::SetValue { dim, value } => {
                let q = self.open.as_mut().expect("open question");
                let old = q.z[*dim];
                q.slide += (value - old).abs() / dims[*dim].width();
                let mut z = q.z.clone();
                z[*dim] = *value;
                new_z = Some((z, *dim, if *value > old { 1 } else if *value < old { -1 } else { 0 }));
            }
            Action::Select { dim, choice } => {
                let q = self.open.as_mut().expect("open question");
                let DimDomain::Discrete { support } = &dims[*dim] else {
                    unreachable!("checked above")
                };
                let value = support[*choice];
                if q.z[*dim] != value {
                    q.slide += 1.0;
                }
                let mut z = q.z.clone();
                z[*dim] = value;
                new_z = Some((z, *dim, 2));
            }
            Action::Skip => {
                let q = self.open.as_mut().expect("open question");
                q.integrate_to_now();
                let mut e = Event::new(0, t, EventKind::Skip);
                e.question = Some(index);
                e.z = Some(q.z.clone());
                e.d = Some(q.d);
                let outcome = q.outcome(false, true);
                let result = StepResult {
                    d: q.d,
                    solved: false,
                    closed: true,
                    active_ms: q.active_ms,
                };
                self.push(e);
                self.outcomes.push(outcome);
                self.open = None;
                return Ok(result);
            }
            Action::Heartbeat => {
                let mut e = Event::new(0, t, EventKind::Heartbeat);
                e.question = Some(index);
                self.push(e);
            }
            Action::Label { dim, label } => {
                let mut e = Event::new(0, t, EventKind::LabelSet);
                e.question = Some(index);
                e.dim = Some(*dim);
                e.label = Some(label.clone());
                self.push(e);
            }
        }
        if let Some((z, dim, direction)) = new_z {
            let x = self.decoder.decode(&z)?;
            let kind = self.decoder.dataset();
            let q = self.open.as_mut().expect("open question");
            let d = distance(kind, &x, &q.x_target)?;
            q.z = z;
            q.d = d;
            q.err = squared_error(&x.data, &q.x_target.data);
            q.actions += 1;
            let solved = d <= self.log.header.epsilon;
            let changed_direction = q.last_move != Some((dim, direction));
            let due = t - q.last_snapshot_t >= SNAPSHOT_INTERVAL_MS;
            q.last_move = Some((dim, direction));
            let mut e = Event::new(
                0,
                t,
                if direction == 2 {
                    EventKind::RadioSelect
                } else {
                    EventKind::SliderMove
                },
            );
            e.question = Some(index);
            e.dim = Some(dim);
            e.value = Some(q.z[dim]);
            e.z = Some(q.z.clone());
            e.d = Some(d);
            self.push(e);
            if solved || changed_direction || due {
                self.snapshot(t);
            }
            if solved {
                let q = self.open.take().expect("open question");
                let mut e = Event::new(0, t, EventKind::Solve);
                e.question = Some(index);
                e.z = Some(q.z.clone());
                e.d = Some(q.d);
                self.push(e);
                let result = StepResult {
                    d,
                    solved: true,
                    closed: true,
                    active_ms: q.active_ms,
                };
                self.outcomes.push(q.outcome(true, false));
                return Ok(result);
            }
        }
        let q = self.open.as_ref().expect("open question");
        Ok(StepResult {
            d: q.d,
            solved: false,
            closed: false,
            active_ms: q.active_ms,
        })
    }

    /// Logs an out-of-question record such as a survey response or a
    /// single-dimension answer.
    pub fn record(&mut self, kind: EventKind, t: i64, payload: serde_json::Value) -> Result<(), TaskError> {
        if !matches!(kind, EventKind::Survey | EventKind::Answer) {
            return Err(TaskError::State(format!("{kind:?} cannot be recorded directly")));
        }
        self.check_time(t)?;
        if self.open.is_some() {
            self.advance(t);
        }
        self.last_t = Some(t);
        let mut e = Event::new(0, t, kind);
        e.question = self.open.as_ref().map(|q| q.index);
        e.payload = Some(payload);
        self.push(e);
        Ok(())
    }

    /// Closes the session. An unfinished question counts as neither solved nor
    /// skipped; its error integral runs to the end of its active time.
    pub fn finish(mut self) -> (EventLog, Vec<QuestionOutcome>) {
        if let Some(mut q) = self.open.take() {
            q.integrate_to_now();
            self.outcomes.push(q.outcome(false, false));
        }
        (self.log, self.outcomes)
    }
}
