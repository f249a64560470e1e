//! Python module `irecon`: models, distances, metrics, agents, replay and
//! study analysis.

use std::path::PathBuf;

use irecon_core::agents::{self, AgentBudget, AgentKind, AgentPolicy};
use irecon_core::analytics::{self, SessionData, SessionMetrics, TestResult};
use irecon_core::datasets::{dsprites_procedural, sinelines_split, DatasetKind, DatasetSplit, DspritesGrid, Instance};
use irecon_core::disentanglement::{code_factor_matrix, evaluate, BoostingConfig, DEFAULT_BINS};
use irecon_core::models::{load_model, representation_spec, GenerativeModel, RepresentationSpec};
use irecon_core::task::{self, EventLog, TaskParams};
use irecon_study::{Bundle, Registry};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dataset(name: &str) -> PyResult<DatasetKind> {
    name.parse().map_err(err)
}

fn synthetic(kind: DatasetKind, samples: usize, seed: u64) -> PyResult<DatasetSplit> {
    match kind {
        DatasetKind::Sinelines => Ok(sinelines_split(samples, seed)),
        DatasetKind::Dsprites => Ok(dsprites_procedural(DspritesGrid::default(), seed)),
        k => Err(err(format!("{k} has no built-in generator"))),
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    model: GenerativeModel,
    spec: RepresentationSpec,
}

#[pymethods]
impl PyModel {
    /// Closed-form ground-truth generator of a synthetic dataset.
    #[staticmethod]
    #[pyo3(signature = (dataset_name, samples = 2000, seed = 0))]
    fn ground_truth(dataset_name: &str, samples: usize, seed: u64) -> PyResult<Self> {
        let kind = dataset(dataset_name)?;
        let model = GenerativeModel::ground_truth(kind).map_err(err)?;
        let spec = representation_spec(&model, &synthetic(kind, samples, seed)?.heldout).map_err(err)?;
        Ok(Self { model, spec })
    }

    /// Loads a saved model by id from a model directory.
    #[staticmethod]
    fn load(dir: PathBuf, id: &str) -> PyResult<Self> {
        let (model, manifest) = load_model(&dir, id).map_err(err)?;
        Ok(Self {
            model,
            spec: manifest.spec,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.model.id.clone()
    }

    #[getter]
    fn dataset(&self) -> String {
        self.model.dataset.to_string()
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn decode(&self, z: Vec<f64>) -> PyResult<Vec<f32>> {
        Ok(self.model.decode(&z).map_err(err)?.data)
    }

    fn encode(&self, x: Vec<f32>) -> PyResult<Vec<f64>> {
        let x = Instance::new(self.model.dataset, x).map_err(err)?;
        self.model.encode(&x).map_err(err)
    }

    /// Slider domains and sampling source as JSON.
    fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(err)
    }

    /// (MIG, DCI) on the first `samples` items of a generated split.
    #[pyo3(signature = (samples = 10000, seed = 0))]
    fn disentanglement(&self, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let split = synthetic(self.model.dataset, samples.max(100), seed)?;
        let items: Vec<_> = split.train.iter().chain(&split.heldout).take(samples).cloned().collect();
        let m = code_factor_matrix(&self.model, &items).map_err(err)?;
        let r = evaluate(&self.model.id, &m, DEFAULT_BINS, &BoostingConfig::default()).map_err(err)?;
        Ok((r.mig, r.dci))
    }

    /// Runs one simulated participant; returns the JSON-lines log and the
    /// per-question outcomes as JSON.
    #[pyo3(signature = (agent = "coordinate_ascent", seed = 0, max_actions = 60))]
    fn run_agent(&self, agent: &str, seed: u64, max_actions: usize) -> PyResult<(String, String)> {
        let kind: AgentKind = agent.parse().map_err(err)?;
        let budget = AgentBudget {
            max_actions,
            ..AgentBudget::default()
        };
        let (log, outcomes) = agents::run_agent(
            &AgentPolicy::new(kind, seed),
            &self.model,
            &self.spec,
            &TaskParams::for_dataset(self.model.dataset),
            &budget,
            &format!("py-{seed}"),
        )
        .map_err(err)?;
        Ok((log.to_jsonl(), serde_json::to_string(&outcomes).map_err(err)?))
    }

    /// Replays a JSON-lines log; returns the outcomes as JSON.
    fn replay(&self, jsonl: &str) -> PyResult<String> {
        let log = EventLog::from_jsonl(jsonl).map_err(err)?;
        let r = task::replay(&log, &self.model).map_err(err)?;
        serde_json::to_string(&r.outcomes).map_err(err)
    }

    /// Session metrics of a JSON-lines log as JSON.
    fn metrics(&self, jsonl: &str) -> PyResult<String> {
        let log = EventLog::from_jsonl(jsonl).map_err(err)?;
        let data = SessionData::from_log(&log, &self.model).map_err(err)?;
        serde_json::to_string(&SessionMetrics::compute(&data).map_err(err)?).map_err(err)
    }
}

#[pyfunction]
fn distance(dataset_name: &str, a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    let kind = dataset(dataset_name)?;
    let a = Instance::new(kind, a).map_err(err)?;
    let b = Instance::new(kind, b).map_err(err)?;
    task::distance(kind, &a, &b).map_err(err)
}

fn pair(r: TestResult) -> (f64, f64) {
    (r.statistic, r.p)
}

/// (t, p) of a paired t-test.
#[pyfunction]
fn paired_t(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    analytics::paired_t(&a, &b).map(pair).map_err(err)
}

/// (t, p) of Student's independent-samples t-test.
#[pyfunction]
fn independent_t(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    analytics::independent_t(&a, &b).map(pair).map_err(err)
}

/// (F, p) of a one-way ANOVA.
#[pyfunction]
fn oneway_anova(groups: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    analytics::oneway_anova(&refs).map(pair).map_err(err)
}

#[pyfunction]
fn bonferroni_threshold(alpha: f64, comparisons: usize) -> f64 {
    analytics::bonferroni_threshold(alpha, comparisons)
}

#[pyfunction]
fn learning_window(n_q: usize) -> PyResult<usize> {
    analytics::learning_window(n_q).map_err(err)
}

/// Study table from an export directory: `csv`, `long_csv` or `json`.
#[pyfunction]
#[pyo3(signature = (export_dir, models_dir, format = "csv"))]
fn analyze_export(export_dir: PathBuf, models_dir: PathBuf, format: &str) -> PyResult<String> {
    let bundle = Bundle::read_dir(&export_dir).map_err(err)?;
    let table = bundle.table(&Registry::from_dir(&models_dir).map_err(err)?).map_err(err)?;
    match format {
        "csv" => table.to_csv(),
        "long_csv" => table.to_long_csv(),
        "json" => table.to_json(),
        f => return Err(err(format!("unknown format {f}"))),
    }
    .map_err(err)
}

#[pymodule]
fn irecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t, m)?)?;
    m.add_function(wrap_pyfunction!(independent_t, m)?)?;
    m.add_function(wrap_pyfunction!(oneway_anova, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(learning_window, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_export, m)?)?;
    Ok(())
}
