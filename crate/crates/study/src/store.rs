//! Session index and append-only event logs.
//!
//! On disk a store is `index.json` plus `logs/<session>/stage-<k>.jsonl`.
//! Log files are only ever appended to.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use irecon_core::analytics::Survey;
use irecon_core::single_dim::Visualization;
use irecon_core::task::{Event, EventKind, EventLog, LogHeader, TaskKind, TaskParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Assignment, ModelOrder, StudyConfig};
use crate::registry::Registry;
use crate::StudyError;

pub const MAX_BATCH: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub stage: usize,
    pub model_id: String,
    pub task: TaskKind,
    /// Seeds the stage's questions.
    pub seed: u64,
    pub params: TaskParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visualization: Option<Visualization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub study: String,
    pub condition: String,
    pub participant: String,
    /// Position among the study's sessions, from 0.
    pub ordinal: usize,
    pub status: SessionStatus,
    pub created_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_ms: Option<i64>,
    pub stages: Vec<StageInfo>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Index {
    sessions: Vec<SessionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendReport {
    pub stored: usize,
    pub duplicates: usize,
    pub last_seq: Option<u64>,
}

/// In-memory view of a store, optionally mirrored to a directory.
#[derive(Debug, Default)]
pub struct Store {
    root: Option<PathBuf>,
    sessions: Vec<SessionRecord>,
    logs: BTreeMap<(String, usize), EventLog>,
}

fn mix(seed: u64, ordinal: usize) -> u64 {
    seed ^ (ordinal as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn log_path(root: &Path, session: &str, stage: usize) -> PathBuf {
    root.join("logs").join(session).join(format!("stage-{stage}.jsonl"))
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store rooted at `root`, loading the index and
    /// every stage log it refers to.
    pub fn open(root: &Path) -> Result<Self, StudyError> {
        std::fs::create_dir_all(root.join("logs"))?;
        let index_path = root.join("index.json");
        let index: Index = if index_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&index_path)?)?
        } else {
            Index::default()
        };
        let mut logs = BTreeMap::new();
        for s in &index.sessions {
            for st in &s.stages {
                let p = log_path(root, &s.session_id, st.stage);
                if p.exists() {
                    let log = EventLog::from_jsonl(&std::fs::read_to_string(&p)?)?;
                    logs.insert((s.session_id.clone(), st.stage), log);
                }
            }
        }
        Ok(Self {
            root: Some(root.to_path_buf()),
            sessions: index.sessions,
            logs,
        })
    }

    fn write_index(&self) -> Result<(), StudyError> {
        let Some(root) = &self.root else { return Ok(()) };
        let tmp = root.join("index.json.tmp");
        let index = Index {
            sessions: self.sessions.clone(),
        };
        std::fs::write(&tmp, serde_json::to_string_pretty(&index)?)?;
        std::fs::rename(tmp, root.join("index.json"))?;
        Ok(())
    }

    fn append_lines(&self, session: &str, stage: usize, lines: &[String]) -> Result<(), StudyError> {
        let Some(root) = &self.root else { return Ok(()) };
        let path = log_path(root, session, stage);
        std::fs::create_dir_all(path.parent().expect("log path has a parent"))?;
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = String::new();
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    pub fn session(&self, id: &str) -> Option<&SessionRecord> {
        self.sessions.iter().find(|s| s.session_id == id)
    }

    fn session_mut(&mut self, id: &str) -> Option<&mut SessionRecord> {
        self.sessions.iter_mut().find(|s| s.session_id == id)
    }

    /// Sessions of a study in creation order.
    pub fn sessions(&self, study: &str) -> Vec<&SessionRecord> {
        self.sessions.iter().filter(|s| s.study == study).collect()
    }

    pub fn log(&self, session: &str, stage: usize) -> Option<&EventLog> {
        self.logs.get(&(session.to_string(), stage))
    }

    /// Assigns a condition and model order and records the new session.
    pub fn create_session(
        &mut self,
        cfg: &StudyConfig,
        registry: &Registry,
        participant: &str,
        now_ms: i64,
    ) -> Result<SessionRecord, StudyError> {
        if participant.is_empty() {
            return Err(StudyError::BadRequest("empty participant token".into()));
        }
        let existing = self.sessions(&cfg.study);
        if cfg.unique_tokens && existing.iter().any(|s| s.participant == participant) {
            return Err(StudyError::Conflict(format!(
                "participant {participant} already has a session in {}",
                cfg.study
            )));
        }
        let ordinal = existing.len();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, ordinal));
        let condition = match cfg.assignment {
            Assignment::RoundRobin => &cfg.conditions[ordinal % cfg.conditions.len()],
            Assignment::Random => &cfg.conditions[rng.random_range(0..cfg.conditions.len())],
        };
        let mut order = condition.models.clone();
        if condition.model_order == ModelOrder::Random {
            order.shuffle(&mut rng);
        }
        let stages = order
            .into_iter()
            .enumerate()
            .map(|(stage, model_id)| {
                let dims = registry
                    .task_dims(&model_id)
                    .ok_or_else(|| StudyError::NotFound(format!("model {model_id}")))?;
                Ok(StageInfo {
                    stage,
                    task: condition.task,
                    // Kept below 2^53 so browsers read it exactly.
                    seed: rng.random::<u64>() >> 11,
                    params: condition.params(dims),
                    visualization: condition.visualization,
                    model_id,
                })
            })
            .collect::<Result<Vec<_>, StudyError>>()?;
        let record = SessionRecord {
            session_id: format!("{}-{ordinal:05}", cfg.study),
            study: cfg.study.clone(),
            condition: condition.name.clone(),
            participant: participant.to_string(),
            ordinal,
            status: SessionStatus::Open,
            created_ms: now_ms,
            closed_ms: None,
            stages,
        };
        self.sessions.push(record.clone());
        if let Err(e) = self.write_index() {
            self.sessions.pop();
            return Err(e);
        }
        Ok(record)
    }

    fn open_stage(&self, session: &str, stage: usize, closed: StudyError) -> Result<&StageInfo, StudyError> {
        let rec = self.session(session).ok_or_else(|| StudyError::NotFound(format!("session {session}")))?;
        if rec.status == SessionStatus::Closed {
            return Err(closed);
        }
        rec.stages
            .get(stage)
            .ok_or_else(|| StudyError::BadRequest(format!("session {session} has no stage {stage}")))
    }

    /// Appends a batch of events to a stage log. The first batch of a stage
    /// must carry the log header. Events at or below the last stored sequence
    /// number are treated as retries and dropped.
    pub fn append_events(
        &mut self,
        registry: &Registry,
        session: &str,
        stage: usize,
        header: Option<LogHeader>,
        events: Vec<Event>,
    ) -> Result<AppendReport, StudyError> {
        if events.len() > MAX_BATCH {
            return Err(StudyError::TooLarge(format!("{} events, limit {MAX_BATCH}", events.len())));
        }
        let info = self
            .open_stage(session, stage, StudyError::Gone(format!("session {session} is closed")))?
            .clone();
        let key = (session.to_string(), stage);
        let mut lines = Vec::new();
        let new_log = match (self.logs.get(&key), header) {
            (None, None) => return Err(StudyError::BadRequest("the first batch of a stage needs a header".into())),
            (None, Some(h)) => {
                check_header(&h, session, &info, registry)?;
                lines.push(serde_json::to_string(&h)?);
                Some(EventLog::new(h))
            }
            (Some(log), Some(h)) if log.header != h => {
                return Err(StudyError::BadRequest("header differs from the stored one".into()))
            }
            (Some(_), _) => None,
        };
        let current = new_log.as_ref().or_else(|| self.logs.get(&key)).expect("log exists");
        let mut last_seq = current.events.last().map(|e| e.seq);
        let mut last_t = current.events.last().map(|e| e.t_wall);
        let mut fresh = Vec::new();
        let mut duplicates = 0;
        for e in events {
            if last_seq.is_some_and(|s| e.seq <= s) {
                duplicates += 1;
                continue;
            }
            if last_t.is_some_and(|t| e.t_wall < t) {
                return Err(StudyError::BadRequest(format!(
                    "event {} at {} precedes the previous event",
                    e.seq, e.t_wall
                )));
            }
            last_seq = Some(e.seq);
            last_t = Some(e.t_wall);
            lines.push(serde_json::to_string(&e)?);
            fresh.push(e);
        }
        self.append_lines(session, stage, &lines)?;
        let stored = fresh.len();
        let log = self.logs.entry(key).or_insert_with(|| new_log.expect("new stage log"));
        log.events.extend(fresh);
        Ok(AppendReport {
            stored,
            duplicates,
            last_seq,
        })
    }

    /// Records a post-stage survey as a `survey` event with the client's
    /// sequence number.
    pub fn add_survey(
        &mut self,
        registry: &Registry,
        session: &str,
        stage: usize,
        seq: u64,
        t_wall: i64,
        survey: &Survey,
    ) -> Result<AppendReport, StudyError> {
        let gone = || StudyError::Gone(format!("no open session {session}"));
        match self.session(session) {
            Some(r) if r.status == SessionStatus::Open => {}
            _ => return Err(gone()),
        }
        survey.validate().map_err(|e| StudyError::BadRequest(e.to_string()))?;
        if self.log(session, stage).is_none() {
            return Err(StudyError::BadRequest(format!("stage {stage} has no log yet")));
        }
        let mut e = Event::new(seq, t_wall, EventKind::Survey);
        e.payload = Some(serde_json::to_value(survey)?);
        self.append_events(registry, session, stage, None, vec![e])
    }

    pub fn close(&mut self, session: &str, now_ms: i64) -> Result<SessionRecord, StudyError> {
        let rec = self
            .session_mut(session)
            .ok_or_else(|| StudyError::NotFound(format!("session {session}")))?;
        if rec.status == SessionStatus::Open {
            rec.status = SessionStatus::Closed;
            rec.closed_ms = Some(now_ms);
            let out = rec.clone();
            self.write_index()?;
            return Ok(out);
        }
        Ok(rec.clone())
    }
}

fn check_header(h: &LogHeader, session: &str, info: &StageInfo, registry: &Registry) -> Result<(), StudyError> {
    let model = registry
        .get(&info.model_id)
        .ok_or_else(|| StudyError::NotFound(format!("model {}", info.model_id)))?;
    let mismatch = |what: &str| Err(StudyError::BadRequest(format!("header {what} does not match the session")));
    if h.session_id != session {
        return mismatch("session_id");
    }
    if h.model_id != info.model_id {
        return mismatch("model_id");
    }
    if h.task != info.task {
        return mismatch("task");
    }
    if h.dataset != model.manifest.dataset {
        return mismatch("dataset");
    }
    if h.seed != info.seed {
        return mismatch("seed");
    }
    if h.epsilon != info.params.epsilon || h.t_threshold != info.params.t_threshold || h.n_q != info.params.n_q {
        return mismatch("task parameters");
    }
    if h.dims != model.manifest.spec.dims {
        return mismatch("dims");
    }
    Ok(())
}
