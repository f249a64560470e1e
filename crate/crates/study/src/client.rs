//! Blocking HTTP client for the service, and simulated participants that use it.

use std::time::Duration;

use irecon_core::agents::{run_agent, AgentBudget, AgentKind, AgentPolicy};
use irecon_core::analytics::Survey;
use irecon_core::datasets::{DatasetKind, Instance};
use irecon_core::models::ModelManifest;
use irecon_core::task::{EventLog, InstanceDecoder, TaskError, TaskKind};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::export::Results;
use crate::server::{EventBatch, SurveyRequest};
use crate::store::{AppendReport, SessionRecord, MAX_BATCH};
use crate::StudyError;

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Result<Self, StudyError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()?;
        Ok(Self {
            base: base.into().trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn finish<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, StudyError> {
        let status = resp.status();
        let text = resp.text()?;
        if !status.is_success() {
            let message = serde_json::from_str::<Value>(&text)
                .ok()
                .and_then(|v| v["error"].as_str().map(str::to_string))
                .unwrap_or(text);
            return Err(StudyError::Http {
                status: status.as_u16(),
                message,
            });
        }
        Ok(serde_json::from_str(&text)?)
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, StudyError> {
        Self::finish(self.http.get(format!("{}{path}", self.base)).send()?)
    }

    pub fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T, StudyError> {
        Self::finish(self.http.post(format!("{}{path}", self.base)).json(body).send()?)
    }

    pub fn manifest(&self) -> Result<Value, StudyError> {
        self.get("/manifest")
    }

    pub fn model(&self, id: &str) -> Result<ModelManifest, StudyError> {
        self.get(&format!("/models/{id}"))
    }

    pub fn decode_raw(&self, model_id: &str, z: &[f64]) -> Result<(Vec<usize>, Vec<f32>), StudyError> {
        let v: Value = self.post("/decode", &json!({ "model_id": model_id, "z": z }))?;
        Ok((serde_json::from_value(v["shape"].clone())?, serde_json::from_value(v["x"].clone())?))
    }

    pub fn create_session(&self, study: &str, participant_token: &str) -> Result<SessionRecord, StudyError> {
        self.post("/sessions", &json!({ "study": study, "participant_token": participant_token }))
    }

    pub fn session(&self, id: &str) -> Result<SessionRecord, StudyError> {
        self.get(&format!("/sessions/{id}"))
    }

    pub fn close(&self, id: &str) -> Result<SessionRecord, StudyError> {
        self.post(&format!("/sessions/{id}/close"), &json!({}))
    }

    pub fn post_events(&self, batch: &EventBatch) -> Result<AppendReport, StudyError> {
        self.post("/events", batch)
    }

    /// Sends a whole stage log in batches of at most [`MAX_BATCH`] events,
    /// the header with the first.
    pub fn upload_log(&self, stage: usize, log: &EventLog) -> Result<usize, StudyError> {
        let mut stored = 0;
        let mut chunks: Vec<_> = log.events.chunks(MAX_BATCH).collect();
        if chunks.is_empty() {
            chunks.push(&[]);
        }
        for (i, chunk) in chunks.into_iter().enumerate() {
            let r = self.post_events(&EventBatch {
                session_id: log.header.session_id.clone(),
                stage,
                header: (i == 0).then(|| log.header.clone()),
                events: chunk.to_vec(),
            })?;
            stored += r.stored;
        }
        Ok(stored)
    }

    pub fn survey(&self, session_id: &str, stage: usize, seq: u64, t_wall: i64, survey: &Survey) -> Result<AppendReport, StudyError> {
        self.post(
            "/survey",
            &SurveyRequest {
                session_id: session_id.into(),
                stage,
                seq,
                t_wall,
                survey: survey.clone(),
            },
        )
    }

    pub fn results(&self, study: &str) -> Result<Results, StudyError> {
        self.get(&format!("/results?study={study}"))
    }
}

/// Decodes through the service's `/decode` endpoint.
pub struct HttpDecoder<'a> {
    client: &'a Client,
    model_id: String,
    dataset: DatasetKind,
}

impl<'a> HttpDecoder<'a> {
    pub fn new(client: &'a Client, model_id: impl Into<String>, dataset: DatasetKind) -> Self {
        Self {
            client,
            model_id: model_id.into(),
            dataset,
        }
    }
}

impl InstanceDecoder for HttpDecoder<'_> {
    fn decode(&self, z: &[f64]) -> Result<Instance, TaskError> {
        let (shape, data) = self
            .client
            .decode_raw(&self.model_id, z)
            .map_err(|e| TaskError::Decode(e.to_string()))?;
        let x = Instance::new(self.dataset, data).map_err(|e| TaskError::Decode(e.to_string()))?;
        if x.shape != shape {
            return Err(TaskError::Decode(format!("shape {shape:?} for {}", self.dataset)));
        }
        Ok(x)
    }

    fn dataset(&self) -> DatasetKind {
        self.dataset
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Runs one simulated participant through every stage of a new session,
/// decoding over HTTP, then closes the session.
pub fn simulate_session(
    client: &Client,
    study: &str,
    participant_token: &str,
    kind: AgentKind,
    budget: &AgentBudget,
) -> Result<SessionRecord, StudyError> {
    let rec = client.create_session(study, participant_token)?;
    for stage in &rec.stages {
        if stage.task != TaskKind::Reconstruction {
            return Err(StudyError::Config(format!(
                "agents only do reconstruction; stage {} is {:?}",
                stage.stage, stage.task
            )));
        }
        let man = client.model(&stage.model_id)?;
        let decoder = HttpDecoder::new(client, &stage.model_id, man.dataset);
        let (log, _) = run_agent(
            &AgentPolicy::new(kind, stage.seed),
            &decoder,
            &man.spec,
            &stage.params,
            budget,
            &rec.session_id,
        )?;
        client.upload_log(stage.stage, &log)?;
    }
    client.close(&rec.session_id)
}
