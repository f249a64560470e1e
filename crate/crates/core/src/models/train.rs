//! Minibatch training of the AE / VAE / TC / SS families and of trained
//! ground-truth decoders.

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{kl_standard_normal, reconstruction, total_correlation, LatentBatch, Likelihood};
use super::nn::{param_grad_pairs, Activation, Adam, Mlp, MlpGrads};
use super::{Decoder, DimKind, Family, GenerativeModel, ModelError, Provenance};
use crate::datasets::{DatasetKind, DatasetSplit};

/// Log-variances are clamped to this range in the forward pass.
const LOGVAR_RANGE: (f64, f64) = (-12.0, 8.0);
/// Heldout items scored for the reported reconstruction error.
const HELDOUT_EVAL_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub family: Family,
    pub beta: f64,
    pub likelihood: Likelihood,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Continuous code size `D_z`.
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl LossConfig {
    /// Defaults for a dataset/family pair: cross-entropy for images, squared error
    /// for timeseries; step 5e-4 on dSprites and 1e-3 elsewhere; β = 10 for TC/SS.
    pub fn for_dataset(kind: DatasetKind, family: Family) -> Self {
        Self {
            family,
            beta: if matches!(family, Family::Tc | Family::Ss) { 10.0 } else { 1.0 },
            likelihood: if kind.is_image() {
                Likelihood::Bernoulli
            } else {
                Likelihood::Gaussian
            },
            learning_rate: if kind == DatasetKind::Dsprites { 5e-4 } else { 1e-3 },
            batch_size: if kind == DatasetKind::Mnist { 64 } else { 128 },
            iterations: 20_000,
            seed: 0,
            latent_dim: 5,
            hidden: vec![256, 256],
            activation: Activation::Softplus,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    fn validate(&self, data: &DatasetSplit) -> Result<(), ModelError> {
        if self.iterations == 0 {
            return Err(ModelError::Config("iteration count must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(ModelError::Config("batch size must be at least 2".into()));
        }
        if self.latent_dim == 0 && self.family != Family::Gt {
            return Err(ModelError::Config("latent dimension must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if matches!(self.family, Family::Tc | Family::Ss) && !(self.beta >= 1.0) {
            return Err(ModelError::Config(format!("β = {} must be ≥ 1", self.beta)));
        }
        let expected = if data.kind.is_image() {
            Likelihood::Bernoulli
        } else {
            Likelihood::Gaussian
        };
        if self.likelihood != expected {
            return Err(ModelError::Config(format!(
                "{} data needs a {expected:?} likelihood",
                data.kind
            )));
        }
        match self.family {
            Family::Imported => Err(ModelError::Unsupported("imported models are not trainable".into())),
            Family::Ss if !data.has_labels() => Err(ModelError::Config("SS training needs labels".into())),
            Family::Gt if !data.has_factors() => {
                Err(ModelError::Config("GT training needs ground-truth factors".into()))
            }
            _ if data.train.is_empty() => Err(ModelError::Config("training split is empty".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub tc: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub losses: Vec<f64>,
    pub heldout_mse: Option<f64>,
}

impl TrainingHistory {
    /// Exponential moving average of the loss curve.
    pub fn smoothed(&self, alpha: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.losses.len());
        let mut acc = None;
        for &l in &self.losses {
            let v = match acc {
                None => l,
                Some(a) => alpha * l + (1.0 - alpha) * a,
            };
            acc = Some(v);
            out.push(v);
        }
        out
    }
}

/// One minibatch of training data.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f32>,
    pub labels: Vec<u8>,
    pub factors: Vec<Vec<f64>>,
}

pub struct Trainer<'d> {
    cfg: LossConfig,
    data: &'d DatasetSplit,
    layout: Vec<DimKind>,
    encoder: Option<Mlp>,
    decoder: Mlp,
    adam: Adam,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    iteration: usize,
}

struct Grads {
    encoder: Option<MlpGrads>,
    decoder: MlpGrads,
}

impl<'d> Trainer<'d> {
    pub fn new(data: &'d DatasetSplit, cfg: LossConfig) -> Result<Self, ModelError> {
        cfg.validate(data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x_dim = data.kind.instance_len();
        let layout = match cfg.family {
            Family::Gt => gt_layout(data)?,
            Family::Ss => {
                let classes = 1 + data.train.iter().filter_map(|i| i.label).max().unwrap_or(0) as usize;
                let mut l = vec![DimKind::Discrete { cardinality: classes.max(2) }];
                l.extend(vec![DimKind::Continuous; cfg.latent_dim]);
                l
            }
            _ => vec![DimKind::Continuous; cfg.latent_dim],
        };
        let encoder = cfg.family.has_encoder().then(|| {
            let out = if cfg.family.is_variational() {
                2 * cfg.latent_dim
            } else {
                cfg.latent_dim
            };
            let mut sizes = vec![x_dim];
            sizes.extend(&cfg.hidden);
            sizes.push(out);
            Mlp::new(&sizes, cfg.activation, Activation::Identity, &mut rng)
        });
        let mut sizes = vec![GenerativeModel::decoder_input_width(&layout)];
        sizes.extend(&cfg.hidden);
        sizes.push(x_dim);
        let decoder = Mlp::new(&sizes, cfg.activation, Activation::Identity, &mut rng);
        let order = (0..data.train.len()).collect();
        Ok(Self {
            adam: Adam::new(cfg.learning_rate),
            cfg,
            data,
            layout,
            encoder,
            decoder,
            rng,
            order,
            cursor: usize::MAX,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    /// Next minibatch, reshuffling the training split at every epoch boundary.
    pub fn next_batch(&mut self) -> Batch {
        let b = self.cfg.batch_size.min(self.order.len());
        if self.cursor.saturating_add(b) > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = &self.order[self.cursor..self.cursor + b];
        self.cursor += b;
        let x_dim = self.data.kind.instance_len();
        let mut x = Array2::<f32>::zeros((b, x_dim));
        let mut labels = Vec::new();
        let mut factors = Vec::new();
        for (row, &i) in x.axis_iter_mut(Axis(0)).zip(idx) {
            let item = &self.data.train[i];
            row.into_slice().expect("row").copy_from_slice(&item.x.data);
            if let Some(l) = item.label {
                labels.push(l);
            }
            if let Some(f) = &item.factors {
                factors.push(f.clone());
            }
        }
        Batch { x, labels, factors }
    }

    /// Reparameterization noise for one batch (empty for deterministic families).
    pub fn sample_noise(&mut self, rows: usize) -> Array2<f64> {
        if !self.cfg.family.is_variational() {
            return Array2::zeros((rows, 0));
        }
        Array2::from_shape_fn((rows, self.cfg.latent_dim), |_| StandardNormal.sample(&mut self.rng))
    }

    fn tc_weight(&self) -> f64 {
        match self.cfg.family {
            Family::Tc | Family::Ss => self.cfg.beta - 1.0,
            _ => 0.0,
        }
    }

    /// Loss of `batch` under the current parameters, as the given family would see it.
    pub fn evaluate_as(&self, family: Family, beta: f64, batch: &Batch, noise: &Array2<f64>) -> LossBreakdown {
        let weight = match family {
            Family::Tc | Family::Ss => beta - 1.0,
            _ => 0.0,
        };
        self.compute(batch, noise, weight, None)
    }

    fn compute(&self, batch: &Batch, noise: &Array2<f64>, tc_weight: f64, grads: Option<&mut Grads>) -> LossBreakdown {
        let rows = batch.x.nrows();
        let latent = self.cfg.latent_dim;
        let dec_width = self.decoder.input_dim();
        let mut dec_in = Array2::<f32>::zeros((rows, dec_width));
        let mut out = LossBreakdown::default();

        let mut enc_cache = None;
        let mut mean = Vec::new();
        let mut logvar = Vec::new();
        let mut z = Vec::new();

        match self.cfg.family {
            Family::Gt => {
                for (r, f) in batch.factors.iter().enumerate() {
                    GenerativeModel::fill_decoder_input(
                        &self.layout,
                        f,
                        dec_in.row_mut(r).into_slice().expect("row"),
                    );
                }
            }
            family => {
                let enc = self.encoder.as_ref().expect("encoder families");
                let cache = enc.forward_cached(batch.x.clone());
                let offset = dec_width - latent;
                if family == Family::Ss {
                    for (r, &l) in batch.labels.iter().enumerate() {
                        dec_in[[r, l as usize]] = 1.0;
                    }
                }
                if family.is_variational() {
                    mean = Vec::with_capacity(rows * latent);
                    logvar = Vec::with_capacity(rows * latent);
                    z = Vec::with_capacity(rows * latent);
                    for r in 0..rows {
                        for k in 0..latent {
                            let mu = cache.output[[r, k]] as f64;
                            let lv = (cache.output[[r, latent + k]] as f64).clamp(LOGVAR_RANGE.0, LOGVAR_RANGE.1);
                            let zz = mu + (0.5 * lv).exp() * noise[[r, k]];
                            mean.push(mu);
                            logvar.push(lv);
                            z.push(zz);
                            dec_in[[r, offset + k]] = zz as f32;
                        }
                    }
                } else {
                    dec_in.slice_mut(s![.., offset..]).assign(&cache.output);
                }
                enc_cache = Some(cache);
            }
        }

        let dec_cache = self.decoder.forward_cached(dec_in);
        let target = &batch.x;
        let (recon, grad_out) = reconstruction(self.cfg.likelihood, &dec_cache.output, target);
        out.reconstruction = recon;

        let lat = LatentBatch {
            mean: &mean,
            logvar: &logvar,
            z: &z,
            batch: rows,
            latent,
        };
        let variational = self.cfg.family.is_variational();
        let kl = variational.then(|| kl_standard_normal(&lat));
        let tc = variational.then(|| total_correlation(&lat, self.data.train.len()));
        if let Some((v, _)) = &kl {
            out.kl = *v;
        }
        if let Some((v, _)) = &tc {
            out.tc = *v;
        }
        out.total = out.reconstruction + out.kl + tc_weight * out.tc;

        let Some(grads) = grads else {
            return out;
        };
        let need_input_grad = self.cfg.family != Family::Gt;
        let dec_in_grad = self
            .decoder
            .backward(&dec_cache, grad_out, &mut grads.decoder, need_input_grad);
        let (Some(dec_in_grad), Some(enc_cache)) = (dec_in_grad, enc_cache) else {
            return out;
        };
        let offset = dec_width - latent;
        let dz = dec_in_grad.slice(s![.., offset..]);
        let enc = self.encoder.as_ref().expect("encoder families");
        let enc_grads = grads.encoder.as_mut().expect("encoder grads");
        if !variational {
            enc.backward(&enc_cache, dz.to_owned(), enc_grads, false);
            return out;
        }
        let (_, klg) = kl.expect("variational");
        let (_, tcg) = tc.expect("variational");
        let mut g_out = Array2::<f32>::zeros((rows, 2 * latent));
        for r in 0..rows {
            for k in 0..latent {
                let i = r * latent + k;
                let mut g_z = dz[[r, k]] as f64;
                let mut g_mu = klg.mean[i];
                let mut g_lv = klg.logvar[i];
                if tc_weight != 0.0 {
                    g_z += tc_weight * tcg.z[i];
                    g_mu += tc_weight * tcg.mean[i];
                    g_lv += tc_weight * tcg.logvar[i];
                }
                g_mu += g_z;
                let raw_lv = enc_cache.output[[r, latent + k]] as f64;
                if (LOGVAR_RANGE.0..=LOGVAR_RANGE.1).contains(&raw_lv) {
                    g_lv += g_z * 0.5 * (0.5 * logvar[i]).exp() * noise[[r, k]];
                } else {
                    g_lv = 0.0;
                }
                g_out[[r, k]] = g_mu as f32;
                g_out[[r, latent + k]] = g_lv as f32;
            }
        }
        enc.backward(&enc_cache, g_out, enc_grads, false);
        out
    }

    /// Runs one optimization step on a fresh minibatch.
    pub fn step(&mut self) -> Result<LossBreakdown, ModelError> {
        let batch = self.next_batch();
        let noise = self.sample_noise(batch.x.nrows());
        let mut grads = Grads {
            encoder: self.encoder.as_ref().map(Mlp::zero_grads),
            decoder: self.decoder.zero_grads(),
        };
        let loss = self.compute(&batch, &noise, self.tc_weight(), Some(&mut grads));
        self.iteration += 1;
        if !loss.total.is_finite() {
            return Err(ModelError::Diverged {
                iteration: self.iteration,
                detail: format!(
                    "loss {:?} (reconstruction {}, kl {}, tc {})",
                    loss.total, loss.reconstruction, loss.kl, loss.tc
                ),
            });
        }
        let Self {
            adam,
            encoder,
            decoder,
            ..
        } = self;
        let enc_pairs = encoder
            .as_mut()
            .zip(grads.encoder.as_ref())
            .into_iter()
            .flat_map(|(e, g)| param_grad_pairs(e, g));
        adam.update(enc_pairs.chain(param_grad_pairs(decoder, &grads.decoder)));
        Ok(loss)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Copy of the model at the current parameters.
    pub fn snapshot(&self) -> GenerativeModel {
        let cfg = &self.cfg;
        GenerativeModel {
            id: format!("{}-{}-s{}", cfg.family.as_str(), self.data.kind, cfg.seed),
            family: cfg.family,
            dataset: self.data.kind,
            layout: self.layout.clone(),
            likelihood: Some(cfg.likelihood),
            decoder: Decoder::Network(self.decoder.clone()),
            encoder: self.encoder.clone(),
            prior: None,
            provenance: Provenance {
                seed: Some(cfg.seed),
                config_digest: Some(cfg.digest()),
                iterations: self.iteration,
                heldout_mse: None,
            },
        }
    }
}

fn gt_layout(data: &DatasetSplit) -> Result<Vec<DimKind>, ModelError> {
    match data.kind {
        DatasetKind::Dsprites => {
            let mut l = vec![DimKind::Discrete { cardinality: 3 }];
            l.extend([DimKind::Continuous; 4]);
            Ok(l)
        }
        _ => {
            let width = data.train[0].factors.as_ref().map_or(0, Vec::len);
            Ok(vec![DimKind::Continuous; width])
        }
    }
}

/// Trains a model of `cfg.family` on `data`.
///
/// Ground truth on Sinelines, procedural dSprites and circles is closed form and
/// returned without training; GT on other factor datasets trains a decoder from
/// the factors.
pub fn train(data: &DatasetSplit, cfg: &LossConfig) -> Result<(GenerativeModel, TrainingHistory), ModelError> {
    if cfg.family == Family::Gt && closed_form_available(data) {
        let mut model = GenerativeModel::ground_truth(data.kind)?;
        let mse = model.reconstruction_error(&data.heldout)?;
        model.provenance.heldout_mse = Some(mse);
        return Ok((
            model,
            TrainingHistory {
                losses: Vec::new(),
                heldout_mse: Some(mse),
            },
        ));
    }
    let mut trainer = Trainer::new(data, cfg.clone())?;
    let mut history = TrainingHistory {
        losses: Vec::with_capacity(cfg.iterations),
        heldout_mse: None,
    };
    for it in 0..cfg.iterations {
        let loss = trainer.step()?;
        history.losses.push(loss.total);
        if it % 1000 == 0 {
            tracing::debug!(iteration = it, loss = loss.total, "training");
        }
    }
    let mut model = trainer.snapshot();
    if !data.heldout.is_empty() {
        let n = data.heldout.len().min(HELDOUT_EVAL_LIMIT);
        let mse = model.reconstruction_error(&data.heldout[..n])?;
        model.provenance.heldout_mse = Some(mse);
        history.heldout_mse = Some(mse);
    }
    Ok((model, history))
}

fn closed_form_available(data: &DatasetSplit) -> bool {
    match data.kind {
        DatasetKind::Sinelines | DatasetKind::Circles => true,
        DatasetKind::Dsprites => data.metadata.contains_key("procedural"),
        DatasetKind::Mnist => false,
    }
}
