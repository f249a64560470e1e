//! Models the service can decode with.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use irecon_core::models::{load_model_dir, GenerativeModel, ModelManifest, RepresentationSpec};
use irecon_core::single_dim::SingleDim;

use crate::StudyError;

pub struct ServedModel {
    pub model: GenerativeModel,
    pub manifest: ModelManifest,
    /// Dimensions eligible for single-dimension questions.
    pub task_dims: usize,
}

#[derive(Default, Clone)]
pub struct Registry {
    models: BTreeMap<String, Arc<ServedModel>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every model saved in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, StudyError> {
        let mut r = Self::new();
        for (model, manifest) in load_model_dir(dir)? {
            r.insert_manifest(model, manifest)?;
        }
        Ok(r)
    }

    pub fn insert(&mut self, model: GenerativeModel, spec: RepresentationSpec) -> Result<(), StudyError> {
        let manifest = ModelManifest::new(&model, spec, None);
        self.insert_manifest(model, manifest)
    }

    fn insert_manifest(&mut self, model: GenerativeModel, manifest: ModelManifest) -> Result<(), StudyError> {
        if self.models.contains_key(&manifest.id) {
            return Err(StudyError::Config(format!("model {} registered twice", manifest.id)));
        }
        let task_dims = SingleDim::new(&model, &manifest.spec).map(|s| s.task_dims().len()).unwrap_or(0);
        self.models.insert(
            manifest.id.clone(),
            Arc::new(ServedModel {
                model,
                manifest,
                task_dims,
            }),
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<ServedModel>> {
        self.models.get(id)
    }

    pub fn task_dims(&self, id: &str) -> Option<usize> {
        self.get(id).map(|m| m.task_dims)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}
