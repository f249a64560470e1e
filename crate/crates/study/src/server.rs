//! HTTP routes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use irecon_core::analytics::Survey;
use irecon_core::datasets::Instance;
use irecon_core::analytics::Regime;
use irecon_core::single_dim::SingleDim;
use irecon_core::task::{new_question, Event, LogHeader, TaskKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::StudyConfig;
use crate::export::Bundle;
use crate::registry::{Registry, ServedModel};
use crate::store::Store;
use crate::{now_ms, StudyError};

pub struct AppState {
    pub registry: Registry,
    pub studies: BTreeMap<String, StudyConfig>,
    pub store: Mutex<Store>,
}

impl AppState {
    /// Validates every study against the registry.
    pub fn new(registry: Registry, studies: Vec<StudyConfig>, store: Store) -> Result<Self, StudyError> {
        let mut map = BTreeMap::new();
        for s in studies {
            s.validate(&registry)?;
            if map.insert(s.study.clone(), s).is_some() {
                return Err(StudyError::Config("two studies share an id".into()));
            }
        }
        Ok(Self {
            registry,
            studies: map,
            store: Mutex::new(store),
        })
    }

    fn study(&self, id: &str) -> Result<&StudyConfig, StudyError> {
        if self.studies.is_empty() {
            return Err(StudyError::Unavailable);
        }
        self.studies
            .get(id)
            .ok_or_else(|| StudyError::NotFound(format!("study {id}")))
    }

    fn model(&self, id: &str) -> Result<&Arc<ServedModel>, StudyError> {
        self.registry
            .get(id)
            .ok_or_else(|| StudyError::NotFound(format!("model {id}")))
    }

    fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

type Shared = Arc<AppState>;

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, StudyError>;

fn parse<T: for<'de> Deserialize<'de>>(body: &str) -> ApiResult<T> {
    serde_json::from_str(body).map_err(|e| StudyError::BadRequest(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePayload {
    pub shape: Vec<usize>,
    pub x: Vec<f32>,
}

impl From<Instance> for InstancePayload {
    fn from(i: Instance) -> Self {
        Self { shape: i.shape, x: i.data }
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/manifest", get(manifest))
        .route("/models/{id}", get(model))
        .route("/decode", post(decode))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/close", post(close_session))
        .route("/sessions/{id}/stages/{stage}/questions", get(questions))
        .route("/events", post(events))
        .route("/survey", post(survey))
        .route("/single_dim/traversal", post(traversal))
        .route("/single_dim/exemplars", post(exemplars))
        .route("/results", get(results))
        .with_state(state)
}

async fn manifest(State(s): State<Shared>) -> ApiResult<Json<Value>> {
    if s.studies.is_empty() {
        return Err(StudyError::Unavailable);
    }
    let studies: Vec<Value> = s
        .studies
        .values()
        .map(|study| {
            let conditions: Vec<Value> = study
                .conditions
                .iter()
                .map(|c| {
                    let models: Vec<Value> = c
                        .models
                        .iter()
                        .filter_map(|id| s.registry.get(id))
                        .map(|m| {
                            let man = &m.manifest;
                            json!({
                                "id": man.id,
                                "family": man.family,
                                "dataset": man.dataset,
                                "D_z": man.d_z,
                                "discrete_dims": man.discrete_dims,
                                "dims": man.spec.dims,
                                "labels": man.spec.labels,
                            })
                        })
                        .collect();
                    json!({
                        "name": c.name,
                        "dataset": c.dataset,
                        "task": c.task,
                        "visualization": c.visualization,
                        "nasa_tlx": c.nasa_tlx,
                        "models": models,
                        "url": format!("/task?study={}&condition={}", study.study, c.name),
                    })
                })
                .collect();
            json!({
                "study": study.study,
                "assignment": study.assignment,
                "design": study.design,
                "conditions": conditions,
            })
        })
        .collect();
    Ok(Json(json!({ "studies": studies })))
}

/// Full manifest of one model, including the encodings its sliders and
/// questions are drawn from.
async fn model(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(&s.model(&id)?.manifest)?))
}

#[derive(Deserialize)]
struct DecodeRequest {
    model_id: String,
    z: Vec<f64>,
}

async fn decode(State(s): State<Shared>, body: String) -> ApiResult<Json<Value>> {
    let req: DecodeRequest = parse(&body)?;
    let m = s.model(&req.model_id)?;
    m.manifest
        .spec
        .validate(&req.z)
        .map_err(|e| StudyError::Domain(e.to_string()))?;
    let x = m.model.decode(&req.z).map_err(|e| StudyError::Domain(e.to_string()))?;
    Ok(Json(json!({ "model_id": req.model_id, "shape": x.shape, "x": x.data })))
}

#[derive(Deserialize)]
struct SessionRequest {
    study: String,
    participant_token: String,
}

async fn create_session(State(s): State<Shared>, body: String) -> ApiResult<Json<Value>> {
    let req: SessionRequest = parse(&body)?;
    let cfg = s.study(&req.study)?;
    let rec = s.store().create_session(cfg, &s.registry, &req.participant_token, now_ms())?;
    tracing::info!(session = %rec.session_id, condition = %rec.condition, "session created");
    Ok(Json(serde_json::to_value(rec)?))
}

async fn get_session(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let store = s.store();
    let rec = store
        .session(&id)
        .ok_or_else(|| StudyError::NotFound(format!("session {id}")))?;
    Ok(Json(serde_json::to_value(rec)?))
}

async fn close_session(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let rec = s.store().close(&id, now_ms())?;
    Ok(Json(serde_json::to_value(rec)?))
}

/// The questions of one stage, generated from the stage seed.
async fn questions(State(s): State<Shared>, Path((id, stage)): Path<(String, usize)>) -> ApiResult<Json<Value>> {
    let info = {
        let store = s.store();
        let rec = store
            .session(&id)
            .ok_or_else(|| StudyError::NotFound(format!("session {id}")))?;
        rec.stages
            .get(stage)
            .cloned()
            .ok_or_else(|| StudyError::NotFound(format!("stage {stage} of {id}")))?
    };
    let m = s.model(&info.model_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(info.seed);
    let list: Vec<Value> = match info.task {
        TaskKind::Reconstruction => (0..info.params.n_q)
            .map(|i| {
                let q = new_question(&m.model, &m.manifest.spec, &info.params, i, &mut rng)?;
                Ok(json!({
                    "index": i,
                    "z_start": q.z_start,
                    "z_target": q.z_target,
                    "x_target": InstancePayload::from(q.x_target),
                }))
            })
            .collect::<Result<_, StudyError>>()?,
        TaskKind::SingleDim => SingleDim::new(&m.model, &m.manifest.spec)?
            .session_questions(&mut rng)?
            .into_iter()
            .take(info.params.n_q)
            .enumerate()
            .map(|(i, q)| {
                json!({
                    "index": i,
                    "dim": q.dim,
                    "regime": q.regime,
                    "z": q.z,
                    "x": InstancePayload::from(q.x),
                })
            })
            .collect(),
    };
    Ok(Json(json!({ "session_id": id, "stage": stage, "questions": list })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventBatch {
    pub session_id: String,
    pub stage: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<LogHeader>,
    pub events: Vec<Event>,
}

async fn events(State(s): State<Shared>, body: String) -> ApiResult<Json<Value>> {
    let b: EventBatch = parse(&body)?;
    let report = s
        .store()
        .append_events(&s.registry, &b.session_id, b.stage, b.header, b.events)?;
    Ok(Json(serde_json::to_value(report)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyRequest {
    pub session_id: String,
    pub stage: usize,
    pub seq: u64,
    pub t_wall: i64,
    pub survey: Survey,
}

async fn survey(State(s): State<Shared>, body: String) -> ApiResult<Json<Value>> {
    let r: SurveyRequest = parse(&body)?;
    let report = s
        .store()
        .add_survey(&s.registry, &r.session_id, r.stage, r.seq, r.t_wall, &r.survey)?;
    Ok(Json(serde_json::to_value(report)?))
}

#[derive(Deserialize)]
struct GridRequest {
    model_id: String,
    dim: usize,
    seed: u64,
    #[serde(default)]
    page: usize,
}

async fn traversal(State(s): State<Shared>, body: String) -> ApiResult<Json<Value>> {
    let r: GridRequest = parse(&body)?;
    let m = s.model(&r.model_id)?;
    let sd = SingleDim::new(&m.model, &m.manifest.spec)?;
    let g = sd.traversal(r.dim, &mut ChaCha8Rng::seed_from_u64(r.seed))?;
    let rows: Vec<Vec<InstancePayload>> = g
        .rows
        .into_iter()
        .map(|row| row.into_iter().map(InstancePayload::from).collect())
        .collect();
    Ok(Json(json!({
        "model_id": r.model_id,
        "dim": g.dim,
        "values": g.values,
        "base": g.base,
        "rows": rows,
    })))
}

async fn exemplars(State(s): State<Shared>, body: String) -> ApiResult<Json<Value>> {
    let r: GridRequest = parse(&body)?;
    let m = s.model(&r.model_id)?;
    let sd = SingleDim::new(&m.model, &m.manifest.spec)?;
    let page = sd.exemplars(r.dim, r.seed, r.page)?;
    let bins: Vec<Value> = page
        .bins
        .into_iter()
        .map(|b| {
            json!({
                "regime": b.regime,
                "z": b.z,
                "instances": b.instances.into_iter().map(InstancePayload::from).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Json(json!({
        "model_id": r.model_id,
        "dim": page.dim,
        "page": page.page,
        "regimes": Regime::ALL,
        "bins": bins,
    })))
}

#[derive(Deserialize)]
struct ResultsQuery {
    study: String,
    #[serde(default)]
    format: Option<String>,
}

async fn results(State(s): State<Shared>, Query(q): Query<ResultsQuery>) -> ApiResult<Response> {
    let cfg = s.study(&q.study)?;
    let bundle = Bundle::from_store(&s.store(), cfg);
    let res = bundle.results(&s.registry)?;
    let csv = |body: String| ([(header::CONTENT_TYPE, "text/csv")], body).into_response();
    Ok(match q.format.as_deref() {
        None | Some("json") => Json(serde_json::to_value(res)?).into_response(),
        Some("csv") => csv(res.table_csv),
        Some("long_csv") => csv(res.long_csv),
        Some(f) => return Err(StudyError::BadRequest(format!("unknown format {f}"))),
    })
}

/// Serves `state` on `addr` until the process ends.
pub async fn serve(state: AppState, addr: SocketAddr) -> Result<(), StudyError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

/// Starts the service on an ephemeral local port in a background thread and
/// returns its base URL.
pub fn spawn(state: AppState) -> Result<String, StudyError> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = match tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = tx.send(Err(StudyError::Io(e)));
                return;
            }
        };
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::bind("127.0.0.1:0").await {
                Ok(l) => l,
                Err(e) => {
                    let _ = tx.send(Err(StudyError::Io(e)));
                    return;
                }
            };
            let addr = listener.local_addr().expect("bound listener has an address");
            let _ = tx.send(Ok(addr));
            let _ = axum::serve(listener, router(Arc::new(state))).await;
        });
    });
    let addr = rx
        .recv()
        .map_err(|_| StudyError::Config("server thread exited".into()))??;
    Ok(format!("http://{addr}"))
}
