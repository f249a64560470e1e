//! Study configuration: conditions, assignment and analysis settings.

use std::path::Path;

use irecon_core::analytics::{Retention, StudyDesign, TableConfig};
use irecon_core::datasets::DatasetKind;
use irecon_core::single_dim::Visualization;
use irecon_core::task::{TaskKind, TaskParams};
use serde::{Deserialize, Serialize};

use crate::registry::Registry;
use crate::StudyError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    #[default]
    RoundRobin,
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    /// Models in the listed order.
    #[default]
    Fixed,
    /// A fresh permutation per session, drawn at creation.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    pub name: String,
    pub dataset: DatasetKind,
    #[serde(default = "default_task")]
    pub task: TaskKind,
    /// One stage per model.
    pub models: Vec<String>,
    /// Questions per stage; the dataset default for reconstruction and two per
    /// eligible dimension for the single-dimension task.
    #[serde(default, rename = "N_q", skip_serializing_if = "Option::is_none")]
    pub n_q: Option<usize>,
    #[serde(default, rename = "epsilon", alias = "ε", skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_threshold: Option<f64>,
    #[serde(default)]
    pub model_order: ModelOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visualization: Option<Visualization>,
    #[serde(default)]
    pub nasa_tlx: bool,
}

fn default_task() -> TaskKind {
    TaskKind::Reconstruction
}

impl ConditionConfig {
    /// Task parameters for one stage. `task_dims` is the number of dimensions
    /// eligible for single-dimension questions on that stage's model.
    pub fn params(&self, task_dims: usize) -> TaskParams {
        let base = TaskParams::for_dataset(self.dataset);
        let n_q = match (self.n_q, self.task) {
            (Some(n), _) => n,
            (None, TaskKind::Reconstruction) => base.n_q,
            (None, TaskKind::SingleDim) => 2 * task_dims,
        };
        TaskParams {
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            t_threshold: self.t_threshold.unwrap_or(base.t_threshold),
            n_q,
        }
    }

    /// Label of the analysis group a stage belongs to.
    pub fn group(&self, model_id: &str) -> String {
        if self.models.len() == 1 {
            self.name.clone()
        } else {
            format!("{}/{model_id}", self.name)
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_design() -> StudyDesign {
    StudyDesign::Between
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: String,
    pub conditions: Vec<ConditionConfig>,
    #[serde(default)]
    pub assignment: Assignment,
    #[serde(default = "default_true")]
    pub unique_tokens: bool,
    #[serde(default)]
    pub retention: Retention,
    #[serde(default = "default_design")]
    pub design: StudyDesign,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparisons: Option<usize>,
    /// Seeds condition draws, model orders and question seeds.
    #[serde(default)]
    pub seed: u64,
}

impl StudyConfig {
    pub fn from_file(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn table_config(&self) -> TableConfig {
        TableConfig {
            design: self.design,
            alpha: self.alpha,
            comparisons: self.comparisons,
        }
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionConfig> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Checks names, parameters and that every model exists for the
    /// condition's dataset.
    pub fn validate(&self, registry: &Registry) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::Config(format!("study {}: {m}", self.study)));
        if self.study.is_empty() || self.study.contains(['/', '\\']) {
            return bad("study id must be a non-empty path-safe name".into());
        }
        if self.conditions.is_empty() {
            return bad("no conditions".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if self.conditions[..i].iter().any(|o| o.name == c.name) {
                return bad(format!("duplicate condition {}", c.name));
            }
            if c.models.is_empty() {
                return bad(format!("condition {} lists no models", c.name));
            }
            if c.n_q == Some(0) {
                return bad(format!("condition {}: N_q must be at least 1", c.name));
            }
            if c.task == TaskKind::SingleDim && c.visualization.is_none() {
                return bad(format!("condition {} needs a visualization", c.name));
            }
            for id in &c.models {
                let Some(m) = registry.get(id) else {
                    return bad(format!("condition {} references unknown model {id}", c.name));
                };
                if m.manifest.dataset != c.dataset {
                    return bad(format!("model {id} is for {} not {}", m.manifest.dataset, c.dataset));
                }
                let p = c.params(registry.task_dims(id).unwrap_or(0));
                if p.n_q == 0 {
                    return bad(format!("model {id} has no dimension eligible for questions"));
                }
                p.validate().map_err(|e| StudyError::Config(format!("condition {}: {e}", c.name)))?;
            }
        }
        Ok(())
    }
}
