//! Portable weight bundles: `u64` little-endian header length, a JSON header,
//! then little-endian `f32` tensors in header order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::nn::{Activation, Dense, Mlp};
use super::spec::{PriorDim, RepresentationSpec};
use super::{Decoder, DimKind, Family, GenerativeModel, Likelihood, ModelError, Provenance};
use crate::datasets::DatasetKind;

const FORMAT: &str = "irecon-weights";
const VERSION: u32 = 1;
/// Header sizes above this are treated as corruption rather than allocated.
const MAX_HEADER: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub family: Family,
    pub dataset: DatasetKind,
    pub layout: Vec<DimKind>,
    pub likelihood: Option<Likelihood>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<PriorDim>>,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<Vec<LayerHeader>>,
    pub decoder: Vec<LayerHeader>,
}

impl BundleHeader {
    fn tensor_len(&self) -> usize {
        self.encoder
            .iter()
            .flatten()
            .chain(&self.decoder)
            .map(|l| l.inputs * l.outputs + l.outputs)
            .sum()
    }
}

/// A decoded bundle: header plus the flat parameter stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub header: BundleHeader,
    pub tensors: Vec<f32>,
}

impl WeightBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.tensors.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.tensors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| ModelError::Format("missing header length".into()))?;
        let header_len = u64::from_le_bytes(len_bytes);
        if header_len > MAX_HEADER || 8 + header_len as usize > bytes.len() {
            return Err(ModelError::Format(format!(
                "header length {header_len} exceeds file size {}",
                bytes.len()
            )));
        }
        let body_start = 8 + header_len as usize;
        let header: BundleHeader = serde_json::from_slice(&bytes[8..body_start])
            .map_err(|e| ModelError::Format(format!("bad header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(ModelError::Format(format!(
                "unsupported bundle {} v{}",
                header.format, header.version
            )));
        }
        let body = &bytes[body_start..];
        let expected = header.tensor_len();
        if body.len() != 4 * expected {
            return Err(ModelError::Format(format!(
                "expected {} tensor bytes, found {}",
                4 * expected,
                body.len()
            )));
        }
        let tensors = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { header, tensors })
    }

    /// Hex SHA-256 of the serialized bundle.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn describe(net: &Mlp, tensors: &mut Vec<f32>) -> Vec<LayerHeader> {
    net.layers
        .iter()
        .map(|l| {
            tensors.extend(l.weight.iter());
            tensors.extend(l.bias.iter());
            LayerHeader {
                inputs: l.inputs(),
                outputs: l.outputs(),
                activation: l.activation,
            }
        })
        .collect()
}

fn rebuild(layers: &[LayerHeader], stream: &mut std::slice::Iter<'_, f32>) -> Result<Mlp, ModelError> {
    if layers.is_empty() {
        return Err(ModelError::Format("network without layers".into()));
    }
    for pair in layers.windows(2) {
        if pair[0].outputs != pair[1].inputs {
            return Err(ModelError::Format(format!(
                "layer shapes {}→{} and {}→{} do not chain",
                pair[0].inputs, pair[0].outputs, pair[1].inputs, pair[1].outputs
            )));
        }
    }
    let mut take = |n: usize| -> Vec<f32> { stream.by_ref().take(n).copied().collect() };
    Ok(Mlp {
        layers: layers
            .iter()
            .map(|h| Dense {
                weight: Array2::from_shape_vec((h.inputs, h.outputs), take(h.inputs * h.outputs))
                    .expect("length checked against header"),
                bias: Array1::from(take(h.outputs)),
                activation: h.activation,
            })
            .collect(),
    })
}

/// Serializes a network-backed model. Closed-form decoders have no weights to export.
pub fn export_weights(model: &GenerativeModel) -> Result<WeightBundle, ModelError> {
    let Decoder::Network(decoder) = &model.decoder else {
        return Err(ModelError::Unsupported(format!(
            "{} uses a closed-form decoder with no exportable layers",
            model.id
        )));
    };
    let mut tensors = Vec::new();
    let encoder = model.encoder.as_ref().map(|e| describe(e, &mut tensors));
    let decoder = describe(decoder, &mut tensors);
    Ok(WeightBundle {
        header: BundleHeader {
            format: FORMAT.into(),
            version: VERSION,
            id: model.id.clone(),
            family: model.family,
            dataset: model.dataset,
            layout: model.layout.clone(),
            likelihood: model.likelihood,
            prior: model.prior.clone(),
            provenance: model.provenance.clone(),
            encoder,
            decoder,
        },
        tensors,
    })
}

pub fn import_weights(bundle: &WeightBundle) -> Result<GenerativeModel, ModelError> {
    let h = &bundle.header;
    if bundle.tensors.len() != h.tensor_len() {
        return Err(ModelError::Format("tensor stream does not match header".into()));
    }
    let mut stream = bundle.tensors.iter();
    let encoder = h.encoder.as_deref().map(|l| rebuild(l, &mut stream)).transpose()?;
    let decoder = rebuild(&h.decoder, &mut stream)?;
    let width = GenerativeModel::decoder_input_width(&h.layout);
    if decoder.input_dim() != width || decoder.output_dim() != h.dataset.instance_len() {
        return Err(ModelError::Format(format!(
            "decoder maps {}→{}, layout needs {}→{}",
            decoder.input_dim(),
            decoder.output_dim(),
            width,
            h.dataset.instance_len()
        )));
    }
    if let Some(prior) = &h.prior {
        if prior.len() != h.layout.len() {
            return Err(ModelError::Format("prior does not cover every dimension".into()));
        }
    }
    Ok(GenerativeModel {
        id: h.id.clone(),
        family: h.family,
        dataset: h.dataset,
        layout: h.layout.clone(),
        likelihood: h.likelihood,
        decoder: Decoder::Network(decoder),
        encoder,
        prior: h.prior.clone(),
        provenance: h.provenance.clone(),
    })
}

/// Listing entry describing a servable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub id: String,
    pub family: Family,
    pub dataset: DatasetKind,
    #[serde(rename = "D_z")]
    pub d_z: usize,
    pub discrete_dims: Vec<usize>,
    pub spec: RepresentationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle_path: Option<String>,
}

impl ModelManifest {
    pub fn new(model: &GenerativeModel, spec: RepresentationSpec, bundle_path: Option<String>) -> Self {
        Self {
            id: model.id.clone(),
            family: model.family,
            dataset: model.dataset,
            d_z: model.latent_dim(),
            discrete_dims: model.discrete_dims(),
            spec,
            bundle_path,
        }
    }
}

const MANIFEST_SUFFIX: &str = ".manifest.json";

/// Writes `{id}.manifest.json`, plus `{id}.bin` weights for network models,
/// into `dir`.
pub fn save_model(dir: &Path, model: &GenerativeModel, spec: RepresentationSpec) -> Result<ModelManifest, ModelError> {
    std::fs::create_dir_all(dir)?;
    let bundle_path = if model.is_closed_form() {
        None
    } else {
        let name = format!("{}.bin", model.id);
        export_weights(model)?.write(&dir.join(&name))?;
        Some(name)
    };
    let manifest = ModelManifest::new(model, spec, bundle_path);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| ModelError::Format(e.to_string()))?;
    std::fs::write(dir.join(format!("{}{MANIFEST_SUFFIX}", model.id)), json)?;
    Ok(manifest)
}

/// Rebuilds the model a manifest describes; bundle paths are relative to `dir`.
pub fn load_manifest_model(dir: &Path, manifest: &ModelManifest) -> Result<GenerativeModel, ModelError> {
    let model = match &manifest.bundle_path {
        Some(p) => import_weights(&WeightBundle::read(&dir.join(p))?)?,
        None if manifest.family == Family::Gt => GenerativeModel::ground_truth(manifest.dataset)?.with_id(manifest.id.clone()),
        None => {
            return Err(ModelError::Format(format!(
                "manifest {} has no weights and is not a closed form",
                manifest.id
            )))
        }
    };
    if model.id != manifest.id || model.dataset != manifest.dataset || model.family != manifest.family {
        return Err(ModelError::Format(format!(
            "weights for {} do not match manifest {}",
            model.id, manifest.id
        )));
    }
    Ok(model)
}

pub fn load_model(dir: &Path, id: &str) -> Result<(GenerativeModel, ModelManifest), ModelError> {
    let text = std::fs::read_to_string(dir.join(format!("{id}{MANIFEST_SUFFIX}")))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| ModelError::Format(e.to_string()))?;
    Ok((load_manifest_model(dir, &manifest)?, manifest))
}

/// Every model in `dir`, ordered by id.
pub fn load_model_dir(dir: &Path) -> Result<Vec<(GenerativeModel, ModelManifest)>, ModelError> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(MANIFEST_SUFFIX) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    ids.iter().map(|id| load_model(dir, id)).collect()
}
