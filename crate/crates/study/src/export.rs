//! Result bundles: the study config, session index and raw stage logs, from
//! which every table is recomputed.

use std::path::Path;

use irecon_core::analytics::{SessionData, SessionMetrics, StudyRow, StudyTable};
use irecon_core::task::EventLog;
use serde::{Deserialize, Serialize};

use crate::config::StudyConfig;
use crate::registry::Registry;
use crate::store::{SessionRecord, SessionStatus, Store};
use crate::StudyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub session_id: String,
    pub stage: usize,
    pub jsonl: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub config: StudyConfig,
    pub sessions: Vec<SessionRecord>,
    pub logs: Vec<StageLog>,
}

/// What `GET /results` returns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Results {
    pub study: String,
    pub table: StudyTable,
    pub table_csv: String,
    pub long_csv: String,
    pub bundle: Bundle,
}

impl Bundle {
    pub fn from_store(store: &Store, config: &StudyConfig) -> Self {
        let sessions: Vec<SessionRecord> = store.sessions(&config.study).into_iter().cloned().collect();
        let logs = sessions
            .iter()
            .flat_map(|s| s.stages.iter().map(move |st| (s, st.stage)))
            .filter_map(|(s, stage)| {
                store.log(&s.session_id, stage).map(|log| StageLog {
                    session_id: s.session_id.clone(),
                    stage,
                    jsonl: log.to_jsonl(),
                })
            })
            .collect();
        Self {
            config: config.clone(),
            sessions,
            logs,
        }
    }

    /// Writes `config.json`, `index.json` and `logs/<session>/stage-<k>.jsonl`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), StudyError> {
        std::fs::create_dir_all(dir.join("logs"))?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        std::fs::write(
            dir.join("index.json"),
            serde_json::to_string_pretty(&serde_json::json!({ "sessions": self.sessions }))?,
        )?;
        for l in &self.logs {
            let sub = dir.join("logs").join(&l.session_id);
            std::fs::create_dir_all(&sub)?;
            std::fs::write(sub.join(format!("stage-{}.jsonl", l.stage)), &l.jsonl)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, StudyError> {
        let config: StudyConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
        #[derive(Deserialize)]
        struct Index {
            sessions: Vec<SessionRecord>,
        }
        let index: Index = serde_json::from_str(&std::fs::read_to_string(dir.join("index.json"))?)?;
        let mut logs = Vec::new();
        for s in &index.sessions {
            for st in &s.stages {
                let p = dir.join("logs").join(&s.session_id).join(format!("stage-{}.jsonl", st.stage));
                if p.exists() {
                    logs.push(StageLog {
                        session_id: s.session_id.clone(),
                        stage: st.stage,
                        jsonl: std::fs::read_to_string(p)?,
                    });
                }
            }
        }
        Ok(Self {
            config,
            sessions: index.sessions,
            logs,
        })
    }

    /// Replays every stage log of the closed sessions against its model and
    /// applies the study's retention rules.
    pub fn rows(&self, registry: &Registry) -> Result<Vec<StudyRow>, StudyError> {
        let mut rows = Vec::new();
        for l in &self.logs {
            let s = self
                .sessions
                .iter()
                .find(|s| s.session_id == l.session_id)
                .ok_or_else(|| StudyError::Config(format!("log for unindexed session {}", l.session_id)))?;
            if s.status != SessionStatus::Closed {
                continue;
            }
            let log = EventLog::from_jsonl(&l.jsonl)?;
            let model = registry
                .get(&log.header.model_id)
                .ok_or_else(|| StudyError::NotFound(format!("model {}", log.header.model_id)))?;
            let data = SessionData::from_log(&log, &model.model)?;
            if !self.config.retention.keeps(&data) {
                continue;
            }
            let condition = self
                .config
                .condition(&s.condition)
                .ok_or_else(|| StudyError::Config(format!("session {} has unknown condition {}", s.session_id, s.condition)))?;
            rows.push(StudyRow {
                condition: condition.group(&log.header.model_id),
                participant: s.participant.clone(),
                metrics: SessionMetrics::compute(&data)?,
            });
        }
        Ok(rows)
    }

    pub fn table(&self, registry: &Registry) -> Result<StudyTable, StudyError> {
        Ok(StudyTable::build(&self.rows(registry)?, self.config.table_config())?)
    }

    pub fn results(self, registry: &Registry) -> Result<Results, StudyError> {
        let table = self.table(registry)?;
        Ok(Results {
            study: self.config.study.clone(),
            table_csv: table.to_csv()?,
            long_csv: table.to_long_csv()?,
            table,
            bundle: self,
        })
    }
}
