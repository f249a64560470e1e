//! Session metrics, learning deltas, statistical tests and study tables.

mod stats;
mod table;

use serde::{Deserialize, Serialize};

pub use stats::{bonferroni_threshold, independent_t, oneway_anova, paired_t, repeated_anova, Design, TestResult};
pub use table::{ConditionSummary, MetricSummary, PairwiseTest, StudyDesign, StudyRow, StudyTable, TableConfig};

use crate::task::{replay, EventKind, EventLog, InstanceDecoder, LogHeader, QuestionOutcome, TaskError, TaskKind};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("not enough data: {0}")]
    Insufficient(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("invalid survey response: {0}")]
    Survey(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NasaTlx {
    pub mental_demand: f64,
    pub performance: f64,
    pub effort: f64,
    pub frustration: f64,
}

/// A post-stage questionnaire as posted by the front-end.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Survey {
    /// Single Ease Question, 1 (very hard) to 7 (very easy).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nasa_tlx: Option<NasaTlx>,
    /// "I understood what many of the dimensions meant", 1 to 5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_understanding: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<serde_json::Value>,
}

fn in_range(name: &str, v: Option<f64>, lo: f64, hi: f64) -> Result<(), AnalyticsError> {
    match v {
        Some(x) if !(lo..=hi).contains(&x) => Err(AnalyticsError::Survey(format!("{name} = {x} outside [{lo}, {hi}]"))),
        _ => Ok(()),
    }
}

impl Survey {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if let Some(s) = self.seq {
            if s.fract() != 0.0 {
                return Err(AnalyticsError::Survey(format!("SEQ must be an integer, got {s}")));
            }
        }
        in_range("seq", self.seq, 1.0, 7.0)?;
        in_range("likert_understanding", self.likert_understanding, 1.0, 5.0)?;
        if let Some(t) = &self.nasa_tlx {
            for (name, v) in [
                ("mental_demand", t.mental_demand),
                ("performance", t.performance),
                ("effort", t.effort),
                ("frustration", t.frustration),
            ] {
                in_range(name, Some(v), 0.0, 100.0)?;
            }
        }
        Ok(())
    }

    pub fn from_payload(v: &serde_json::Value) -> Result<Self, AnalyticsError> {
        let s: Survey = serde_json::from_value(v.clone())?;
        s.validate()?;
        Ok(s)
    }

    /// Later answers override earlier ones field by field.
    fn merge(&mut self, other: Survey) {
        self.seq = other.seq.or(self.seq);
        self.nasa_tlx = other.nasa_tlx.or(self.nasa_tlx);
        self.likert_understanding = other.likert_understanding.or(self.likert_understanding);
        if other.labels.is_some() {
            self.labels = other.labels;
        }
        if other.demographics.is_some() {
            self.demographics = other.demographics;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Low,
    Medium,
    High,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Low, Regime::Medium, Regime::High];
}

/// One single-dimension answer as logged in an `answer` event payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdAnswer {
    pub dim: usize,
    pub regime: Regime,
    pub answer: Regime,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_confident: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_sense: Option<f64>,
    pub response_ms: i64,
}

/// Everything analytics needs from one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub header: LogHeader,
    pub outcomes: Vec<QuestionOutcome>,
    pub answers: Vec<SdAnswer>,
    pub survey: Survey,
}

impl SessionData {
    /// Replays the log against its model, so every metric comes from the
    /// recomputed stream rather than from logged values.
    pub fn from_log<D: InstanceDecoder>(log: &EventLog, decoder: D) -> Result<Self, AnalyticsError> {
        let r = replay(log, decoder)?;
        Self::from_parts(log, r.outcomes)
    }

    pub fn from_parts(log: &EventLog, outcomes: Vec<QuestionOutcome>) -> Result<Self, AnalyticsError> {
        let mut survey = Survey::default();
        let mut answers = Vec::new();
        for e in &log.events {
            match (e.kind, &e.payload) {
                (EventKind::Survey, Some(p)) => survey.merge(Survey::from_payload(p)?),
                (EventKind::Answer, Some(p)) => {
                    let a: SdAnswer = serde_json::from_value(p.clone())?;
                    if a.correct != (a.answer == a.regime) {
                        return Err(AnalyticsError::Survey(format!(
                            "answer for dim {} marked correct = {} inconsistently",
                            a.dim, a.correct
                        )));
                    }
                    in_range("likert_confident", a.likert_confident, 1.0, 5.0)?;
                    in_range("likert_sense", a.likert_sense, 1.0, 5.0)?;
                    answers.push(a);
                }
                _ => {}
            }
        }
        Ok(Self {
            header: log.header.clone(),
            outcomes,
            answers,
            survey,
        })
    }

    pub fn solved(&self) -> usize {
        self.outcomes.iter().filter(|o| o.solved).count()
    }

    /// Number of questions the session covered.
    pub fn questions(&self) -> usize {
        match self.header.task {
            TaskKind::Reconstruction => self.outcomes.len(),
            TaskKind::SingleDim => self.answers.len(),
        }
    }
}

/// Per-question quantities available to [`learning_delta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionMetric {
    Completion,
    ResponseTime,
    SlideDistance,
    ErrorAuc,
    Correctness,
}

fn question_values(s: &SessionData, metric: QuestionMetric) -> Vec<f64> {
    match metric {
        QuestionMetric::Correctness => s.answers.iter().map(|a| f64::from(u8::from(a.correct))).collect(),
        QuestionMetric::ResponseTime if s.header.task == TaskKind::SingleDim => {
            s.answers.iter().map(|a| a.response_ms as f64 / 1000.0).collect()
        }
        _ => s
            .outcomes
            .iter()
            .map(|o| match metric {
                QuestionMetric::Completion => f64::from(u8::from(o.solved)),
                QuestionMetric::ResponseTime => o.active_ms as f64 / 1000.0,
                QuestionMetric::SlideDistance => o.slide_distance,
                QuestionMetric::ErrorAuc => o.error_auc,
                QuestionMetric::Correctness => unreachable!(),
            })
            .collect(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fraction of covered questions that were solved; skips count as unsolved.
pub fn completion_rate(s: &SessionData) -> Result<f64, AnalyticsError> {
    if s.outcomes.is_empty() {
        return Err(AnalyticsError::Insufficient("session covers no question".into()));
    }
    Ok(s.solved() as f64 / s.outcomes.len() as f64)
}

/// Mean slide distance per question.
pub fn slide_distance(s: &SessionData) -> Result<f64, AnalyticsError> {
    if s.outcomes.is_empty() {
        return Err(AnalyticsError::Insufficient("session covers no question".into()));
    }
    Ok(mean(&question_values(s, QuestionMetric::SlideDistance)))
}

/// Error integral summed over questions.
pub fn error_auc(s: &SessionData) -> f64 {
    s.outcomes.iter().map(|o| o.error_auc).sum()
}

/// Window size used by [`learning_delta`].
pub fn learning_window(n_q: usize) -> Result<usize, AnalyticsError> {
    if n_q < 3 {
        return Err(AnalyticsError::Undefined(format!("learning delta needs N_q >= 3, got {n_q}")));
    }
    Ok((n_q - 1) / 2)
}

/// Mean of `metric` over the last window of questions minus its mean over the
/// first window, pooled across sessions. The middle question is excluded
/// when `N_q` is odd.
pub fn learning_delta(sessions: &[SessionData], metric: QuestionMetric) -> Result<f64, AnalyticsError> {
    let first = sessions
        .first()
        .ok_or_else(|| AnalyticsError::Insufficient("no sessions".into()))?;
    let n_q = first.header.n_q;
    if sessions.iter().any(|s| s.header.n_q != n_q) {
        return Err(AnalyticsError::Insufficient("sessions disagree on N_q".into()));
    }
    let w = learning_window(n_q)?;
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for s in sessions {
        let v = question_values(s, metric);
        if v.len() != n_q {
            return Err(AnalyticsError::Insufficient(format!(
                "session {} covers {} of {n_q} questions",
                s.header.session_id,
                v.len()
            )));
        }
        early.extend_from_slice(&v[..w]);
        late.extend_from_slice(&v[n_q - w..]);
    }
    Ok(mean(&late) - mean(&early))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub model_id: String,
    pub task: TaskKind,
    pub questions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_rate: Option<f64>,
    /// Mean active seconds per question, skipped questions included.
    pub response_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slide_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_confident: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_sense: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nasa_tlx: Option<NasaTlx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likert_understanding: Option<f64>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = v.collect();
    (!v.is_empty()).then(|| mean(&v))
}

impl SessionMetrics {
    pub fn compute(s: &SessionData) -> Result<Self, AnalyticsError> {
        let questions = s.questions();
        if questions == 0 {
            return Err(AnalyticsError::Insufficient(format!(
                "session {} covers no question",
                s.header.session_id
            )));
        }
        let recon = s.header.task == TaskKind::Reconstruction;
        let single = !recon;
        Ok(Self {
            session_id: s.header.session_id.clone(),
            model_id: s.header.model_id.clone(),
            task: s.header.task,
            questions,
            completion_rate: recon.then(|| completion_rate(s)).transpose()?,
            response_time: mean(&question_values(s, QuestionMetric::ResponseTime)),
            slide_distance: recon.then(|| slide_distance(s)).transpose()?,
            error_auc: recon.then(|| error_auc(s)),
            correctness: single.then(|| mean(&question_values(s, QuestionMetric::Correctness))),
            likert_confident: mean_of(s.answers.iter().filter_map(|a| a.likert_confident)),
            likert_sense: mean_of(s.answers.iter().filter_map(|a| a.likert_sense)),
            seq: s.survey.seq,
            nasa_tlx: s.survey.nasa_tlx,
            likert_understanding: s.survey.likert_understanding,
        })
    }

    /// Named values in table order. Error AUC is listed both raw and in
    /// thousands.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut push = |name, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name, v));
            }
        };
        push("completion_rate", self.completion_rate);
        push("correctness", self.correctness);
        push("response_time", Some(self.response_time));
        push("slide_distance", self.slide_distance);
        push("error_auc", self.error_auc);
        push("error_auc_k", self.error_auc.map(|v| v / 1000.0));
        push("seq", self.seq);
        push("tlx_mental_demand", self.nasa_tlx.map(|t| t.mental_demand));
        push("tlx_performance", self.nasa_tlx.map(|t| t.performance));
        push("tlx_effort", self.nasa_tlx.map(|t| t.effort));
        push("tlx_frustration", self.nasa_tlx.map(|t| t.frustration));
        push("likert_understanding", self.likert_understanding);
        push("likert_confident", self.likert_confident);
        push("likert_sense", self.likert_sense);
        out
    }
}

/// Which sessions enter the analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retention {
    /// Drop reconstruction sessions with fewer solved questions.
    #[serde(default)]
    pub min_solved: Option<usize>,
    #[serde(default)]
    pub include_practice: bool,
}

impl Retention {
    pub fn keeps(&self, s: &SessionData) -> bool {
        if s.header.practice && !self.include_practice {
            return false;
        }
        match (self.min_solved, s.header.task) {
            (Some(k), TaskKind::Reconstruction) => s.solved() >= k,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests;
