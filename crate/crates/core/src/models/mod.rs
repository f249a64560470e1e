//! Generative models: closed-form ground-truth decoders and trainable
//! (variational) autoencoders, plus portable weight bundles.

mod bundle;
mod loss;
mod nn;
mod spec;
mod train;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub use bundle::{
    export_weights, import_weights, load_manifest_model, load_model, load_model_dir, save_model, BundleHeader, LayerHeader,
    ModelManifest, WeightBundle,
};
pub use loss::{kl_standard_normal, reconstruction, total_correlation, LatentBatch, LatentGrads, Likelihood};
pub use nn::{Activation, Adam, Dense, Mlp};
pub use spec::{
    representation_spec, DimDomain, PriorDim, RepresentationSpec, SamplingSource, DEGENERATE_WIDTH,
    INACTIVE_HALF_WIDTH, PRIOR_QUANTILES,
};
pub use train::{train, Batch, LossBreakdown, LossConfig, Trainer, TrainingHistory};

use crate::datasets::{
    circles_decode, render_sprite, sinelines_decode, DatasetError, DatasetKind, Instance, Item,
    SpriteFactors, DSPRITES_RESOLUTION,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },
    #[error("weight bundle format error: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gt,
    Ae,
    Vae,
    Tc,
    Ss,
    Imported,
}

impl Family {
    pub fn is_variational(self) -> bool {
        matches!(self, Family::Vae | Family::Tc | Family::Ss)
    }

    pub fn has_encoder(self) -> bool {
        matches!(self, Family::Ae | Family::Vae | Family::Tc | Family::Ss)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gt => "gt",
            Family::Ae => "ae",
            Family::Vae => "vae",
            Family::Tc => "tc",
            Family::Ss => "ss",
            Family::Imported => "imported",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl std::str::FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gt" => Ok(Family::Gt),
            "ae" => Ok(Family::Ae),
            "vae" => Ok(Family::Vae),
            "tc" => Ok(Family::Tc),
            "ss" => Ok(Family::Ss),
            "imported" => Ok(Family::Imported),
            other => Err(ModelError::Config(format!("unknown model family {other:?}"))),
        }
    }
}

/// Kind of one representation dimension as seen by the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DimKind {
    Continuous,
    Discrete { cardinality: usize },
}

impl DimKind {
    fn width(self) -> usize {
        match self {
            DimKind::Continuous => 1,
            DimKind::Discrete { cardinality } => cardinality,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Decoder {
    ClosedForm,
    Network(Mlp),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_mse: Option<f64>,
}

/// A decoder `g(z) → x`, optionally paired with an encoder.
///
/// Representation values are flat `f64` slices in layout order; discrete
/// entries carry the chosen class index.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub id: String,
    pub family: Family,
    pub dataset: DatasetKind,
    pub layout: Vec<DimKind>,
    pub likelihood: Option<Likelihood>,
    pub(crate) decoder: Decoder,
    pub(crate) encoder: Option<Mlp>,
    /// Present for imported models whose sampling comes from a prior.
    pub prior: Option<Vec<PriorDim>>,
    pub provenance: Provenance,
}

impl GenerativeModel {
    /// Closed-form ground-truth decoder for a synthetic dataset.
    pub fn ground_truth(dataset: DatasetKind) -> Result<Self, ModelError> {
        let layout = match dataset {
            DatasetKind::Sinelines => vec![DimKind::Continuous; 5],
            DatasetKind::Dsprites => {
                let mut l = vec![DimKind::Discrete { cardinality: 3 }];
                l.extend([DimKind::Continuous; 4]);
                l
            }
            DatasetKind::Circles => vec![DimKind::Continuous; 2],
            DatasetKind::Mnist => {
                return Err(ModelError::Unsupported("MNIST has no ground-truth generator".into()))
            }
        };
        Ok(Self {
            id: format!("gt-{dataset}"),
            family: Family::Gt,
            dataset,
            layout,
            likelihood: None,
            decoder: Decoder::ClosedForm,
            encoder: None,
            prior: None,
            provenance: Provenance::default(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Total number of representation dimensions (continuous and discrete).
    pub fn dim_count(&self) -> usize {
        self.layout.len()
    }

    /// Number of continuous dimensions.
    pub fn latent_dim(&self) -> usize {
        self.layout.iter().filter(|d| matches!(d, DimKind::Continuous)).count()
    }

    pub fn discrete_dims(&self) -> Vec<usize> {
        self.layout
            .iter()
            .filter_map(|d| match d {
                DimKind::Discrete { cardinality } => Some(*cardinality),
                DimKind::Continuous => None,
            })
            .collect()
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.decoder, Decoder::ClosedForm)
    }

    pub(crate) fn decoder_input_width(layout: &[DimKind]) -> usize {
        layout.iter().map(|d| d.width()).sum()
    }

    fn check_z(&self, z: &[f64]) -> Result<(), ModelError> {
        if z.len() != self.layout.len() {
            return Err(ModelError::Domain(format!(
                "{} expects {} representation values, got {}",
                self.id,
                self.layout.len(),
                z.len()
            )));
        }
        for (i, (v, kind)) in z.iter().zip(&self.layout).enumerate() {
            if !v.is_finite() {
                return Err(ModelError::Domain(format!("dim {i} is not finite")));
            }
            if let DimKind::Discrete { cardinality } = kind {
                if v.fract() != 0.0 || *v < 0.0 || *v >= *cardinality as f64 {
                    return Err(ModelError::Domain(format!(
                        "dim {i}: {v} is not a class index below {cardinality}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the one-hot/continuous decoder input for `z` into `row`.
    pub(crate) fn fill_decoder_input(layout: &[DimKind], z: &[f64], row: &mut [f32]) {
        let mut col = 0;
        for (v, kind) in z.iter().zip(layout) {
            match kind {
                DimKind::Continuous => {
                    row[col] = *v as f32;
                    col += 1;
                }
                DimKind::Discrete { cardinality } => {
                    row[col..col + cardinality].fill(0.0);
                    row[col + *v as usize] = 1.0;
                    col += cardinality;
                }
            }
        }
    }

    fn network_output_to_instance(&self, out: &[f32]) -> Result<Instance, ModelError> {
        let data: Vec<f32> = match self.likelihood {
            Some(Likelihood::Bernoulli) => out
                .iter()
                .map(|&l| nn::sigmoid(l).clamp(1e-7, 1.0 - 1e-7))
                .collect(),
            _ => out.to_vec(),
        };
        Ok(Instance::new(self.dataset, data)?)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Instance, ModelError> {
        self.check_z(z)?;
        match &self.decoder {
            Decoder::ClosedForm => Ok(match self.dataset {
                DatasetKind::Sinelines => sinelines_decode(z)?,
                DatasetKind::Dsprites => {
                    let f = SpriteFactors::from_slice(z)?;
                    Instance::new(DatasetKind::Dsprites, render_sprite(&f, DSPRITES_RESOLUTION))?
                }
                DatasetKind::Circles => circles_decode(z)?,
                DatasetKind::Mnist => unreachable!("no closed-form MNIST decoder"),
            }),
            Decoder::Network(net) => {
                let mut input = Array2::<f32>::zeros((1, net.input_dim()));
                Self::fill_decoder_input(
                    &self.layout,
                    z,
                    input.as_slice_mut().expect("standard layout"),
                );
                let out = net.forward(input.view());
                self.network_output_to_instance(out.as_slice().expect("standard layout"))
            }
        }
    }

    pub fn decode_batch(&self, zs: &[Vec<f64>]) -> Result<Vec<Instance>, ModelError> {
        match &self.decoder {
            Decoder::ClosedForm => zs.iter().map(|z| self.decode(z)).collect(),
            Decoder::Network(net) => {
                let mut out = Vec::with_capacity(zs.len());
                for chunk in zs.chunks(256) {
                    let mut input = Array2::<f32>::zeros((chunk.len(), net.input_dim()));
                    for (z, mut row) in chunk.iter().zip(input.axis_iter_mut(Axis(0))) {
                        self.check_z(z)?;
                        Self::fill_decoder_input(&self.layout, z, row.as_slice_mut().expect("row"));
                    }
                    let y = net.forward(input.view());
                    for row in y.axis_iter(Axis(0)) {
                        out.push(self.network_output_to_instance(row.as_slice().expect("row"))?);
                    }
                }
                Ok(out)
            }
        }
    }

    fn encoder(&self) -> Result<&Mlp, ModelError> {
        self.encoder.as_ref().ok_or_else(|| {
            ModelError::Unsupported(format!("{} model {} has no encoder", self.family, self.id))
        })
    }

    /// Continuous code of each instance: the posterior mean for variational families.
    pub fn encode_batch(&self, xs: &[&Instance]) -> Result<Vec<Vec<f64>>, ModelError> {
        let enc = self.encoder()?;
        let latent = self.latent_dim();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(256) {
            let mut input = Array2::<f32>::zeros((chunk.len(), enc.input_dim()));
            for (x, mut row) in chunk.iter().zip(input.axis_iter_mut(Axis(0))) {
                if x.kind != self.dataset || x.data.len() != enc.input_dim() {
                    return Err(ModelError::Domain(format!(
                        "{} instance of length {} does not fit encoder input {}",
                        x.kind,
                        x.data.len(),
                        enc.input_dim()
                    )));
                }
                row.as_slice_mut().expect("row").copy_from_slice(&x.data);
            }
            let y = enc.forward(input.view());
            for row in y.axis_iter(Axis(0)) {
                out.push(row.iter().take(latent).map(|&v| v as f64).collect());
            }
        }
        Ok(out)
    }

    pub fn encode(&self, x: &Instance) -> Result<Vec<f64>, ModelError> {
        Ok(self.encode_batch(&[x])?.remove(0))
    }

    /// Full representation value of dataset items: ground-truth factors for GT
    /// models, label plus encoding for semi-supervised models, encodings otherwise.
    pub fn represent_batch(&self, items: &[Item]) -> Result<Vec<Vec<f64>>, ModelError> {
        match self.family {
            Family::Gt => items
                .iter()
                .map(|it| {
                    let f = it
                        .factors
                        .clone()
                        .ok_or_else(|| ModelError::Domain("GT model needs ground-truth factors".into()))?;
                    self.check_z(&f)?;
                    Ok(f)
                })
                .collect(),
            Family::Imported => Err(ModelError::Unsupported(format!(
                "imported model {} has no encoder",
                self.id
            ))),
            _ => {
                let xs: Vec<&Instance> = items.iter().map(|i| &i.x).collect();
                let codes = self.encode_batch(&xs)?;
                if self.family != Family::Ss {
                    return Ok(codes);
                }
                items
                    .iter()
                    .zip(codes)
                    .map(|(it, code)| {
                        let label = it
                            .label
                            .ok_or_else(|| ModelError::Domain("SS model needs labels".into()))?;
                        let mut z = vec![label as f64];
                        z.extend(code);
                        Ok(z)
                    })
                    .collect()
            }
        }
    }

    /// Mean over items of the summed squared reconstruction error.
    pub fn reconstruction_error(&self, items: &[Item]) -> Result<f64, ModelError> {
        if items.is_empty() {
            return Err(ModelError::Domain("no items to reconstruct".into()));
        }
        let zs = self.represent_batch(items)?;
        let recon = self.decode_batch(&zs)?;
        let total: f64 = items
            .iter()
            .zip(&recon)
            .map(|(it, r)| squared_error(&it.x.data, &r.data))
            .sum();
        Ok(total / items.len() as f64)
    }
}

/// Summed squared difference between two equally sized instances.
pub fn squared_error(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{sinelines_split, DspritesGrid};

    #[test]
    fn gt_sinelines_matches_closed_form() {
        let gt = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
        let z = [0.3, -1.2, 0.8, 1.7, 2.0];
        assert_eq!(gt.decode(&z).unwrap(), sinelines_decode(&z).unwrap());
        assert_eq!(gt.decode(&z).unwrap(), gt.decode(&z).unwrap());
        assert!(gt.decode(&z[..4]).is_err());
    }

    #[test]
    fn gt_sinelines_heldout_error_is_exactly_zero() {
        let split = sinelines_split(500, 3);
        let gt = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
        assert_eq!(gt.reconstruction_error(&split.heldout).unwrap(), 0.0);
    }

    #[test]
    fn gt_has_no_encoder() {
        let gt = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
        let x = sinelines_decode(&[0.0; 5]).unwrap();
        assert!(matches!(gt.encode(&x), Err(ModelError::Unsupported(_))));
    }

    #[test]
    fn gt_dsprites_layout_and_domain_checks() {
        let gt = GenerativeModel::ground_truth(DatasetKind::Dsprites).unwrap();
        assert_eq!(gt.discrete_dims(), vec![3]);
        assert_eq!(gt.latent_dim(), 4);
        assert!(gt.decode(&[1.0, 1.0, 0.0, 0.5, 0.5]).is_ok());
        assert!(gt.decode(&[1.5, 1.0, 0.0, 0.5, 0.5]).is_err());
        assert!(gt.decode(&[3.0, 1.0, 0.0, 0.5, 0.5]).is_err());
        let split = crate::datasets::dsprites_procedural(DspritesGrid { items: 200, ..Default::default() }, 0);
        assert_eq!(gt.reconstruction_error(&split.heldout).unwrap(), 0.0);
    }

    #[test]
    fn spec_from_single_point_is_all_inactive() {
        let split = sinelines_split(50, 1);
        let gt = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
        let spec = representation_spec(&gt, &split.heldout[..1]).unwrap();
        assert_eq!(spec.inactive_dims(), vec![0, 1, 2, 3, 4]);
        for d in &spec.dims {
            assert!((d.width() - 2.0 * INACTIVE_HALF_WIDTH).abs() < 1e-12);
        }
        assert!(representation_spec(&gt, &[]).is_err());
    }

    #[test]
    fn gt_sinelines_slope_interval_within_support() {
        let split = sinelines_split(2000, 8);
        let gt = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
        let spec = representation_spec(&gt, &split.heldout).unwrap();
        match spec.dims[0] {
            DimDomain::Continuous { lo, hi, inactive } => {
                assert!(-1.0 <= lo && hi <= 1.0 && !inactive);
            }
            _ => panic!("slope is continuous"),
        }
        assert!(spec.inactive_dims().is_empty());
    }

    #[test]
    fn prior_spec_uses_quantiles() {
        let prior = vec![PriorDim::Normal { mean: 0.0, std: 1.0 }, PriorDim::Categorical { k: 10 }];
        let spec = RepresentationSpec::from_prior(&prior).unwrap();
        match spec.dims[0] {
            DimDomain::Continuous { lo, hi, .. } => {
                assert!((hi - 2.5758293).abs() < 1e-6 && (lo + hi).abs() < 1e-9);
            }
            _ => panic!(),
        }
        assert_eq!(spec.dims[1].width(), 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        for _ in 0..200 {
            spec.validate(&spec.sample(&mut rng).unwrap()).unwrap();
        }
    }
}
