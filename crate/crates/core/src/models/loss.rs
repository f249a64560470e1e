//! Loss terms and their gradients.
//!
//! Reconstruction terms work on `f32` network outputs with `f64` accumulation;
//! the latent terms (KL and total correlation) are small `batch × latent`
//! computations done entirely in `f64`.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::nn::sigmoid;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Cross-entropy on logits; decoders emit `sigmoid(logits)`.
    Bernoulli,
    /// Unit-variance Gaussian: half the summed squared error.
    Gaussian,
}

/// Mean over the batch of the per-example negative log-likelihood (up to constants),
/// and its gradient with respect to the network output.
pub fn reconstruction(likelihood: Likelihood, output: &Array2<f32>, target: &Array2<f32>) -> (f64, Array2<f32>) {
    let batch = output.nrows() as f64;
    let scale = (1.0 / batch) as f32;
    let mut grad = Array2::<f32>::zeros(output.raw_dim());
    let mut total = 0.0f64;
    match likelihood {
        Likelihood::Bernoulli => {
            Zip::from(&mut grad)
                .and(output)
                .and(target)
                .for_each(|g, &l, &x| {
                    // softplus(l) - x l, stable for large |l|.
                    let sp = l.max(0.0) + (-l.abs()).exp().ln_1p();
                    total += (sp - x * l) as f64;
                    *g = (sigmoid(l) - x) * scale;
                });
        }
        Likelihood::Gaussian => {
            Zip::from(&mut grad)
                .and(output)
                .and(target)
                .for_each(|g, &p, &x| {
                    let d = p - x;
                    total += 0.5 * (d as f64) * (d as f64);
                    *g = d * scale;
                });
        }
    }
    (total / batch, grad)
}

/// Latent statistics of one minibatch, row-major `batch × latent`.
#[derive(Debug, Clone)]
pub struct LatentBatch<'a> {
    pub mean: &'a [f64],
    pub logvar: &'a [f64],
    pub z: &'a [f64],
    pub batch: usize,
    pub latent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrads {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

impl LatentGrads {
    fn zeros(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            logvar: vec![0.0; n],
            z: vec![0.0; n],
        }
    }
}

/// `KL(N(mean, exp(logvar)) || N(0, I))`, averaged over the batch.
pub fn kl_standard_normal(lat: &LatentBatch<'_>) -> (f64, LatentGrads) {
    let n = lat.batch * lat.latent;
    let mut grads = LatentGrads::zeros(n);
    let inv_b = 1.0 / lat.batch as f64;
    let mut total = 0.0;
    for i in 0..n {
        let (mu, lv) = (lat.mean[i], lat.logvar[i]);
        let var = lv.exp();
        total += 0.5 * (mu * mu + var - lv - 1.0);
        grads.mean[i] = mu * inv_b;
        grads.logvar[i] = 0.5 * (var - 1.0) * inv_b;
    }
    (total * inv_b, grads)
}

fn log_sum_exp_and_softmax(values: &[f64], weights: &mut [f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (w, &v) in weights.iter_mut().zip(values) {
        *w = (v - max).exp();
        sum += *w;
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    max + sum.ln()
}

/// Minibatch-weighted-sampling estimate of the total correlation of the aggregate
/// posterior, `E[log q(z) − Σ_d log q(z_d)]`, for a dataset of `dataset_size` items.
///
/// Gradients are with respect to each sampled `z` and to the posterior parameters
/// of every batch member acting as a mixture component.
pub fn total_correlation(lat: &LatentBatch<'_>, dataset_size: usize) -> (f64, LatentGrads) {
    let (m, d) = (lat.batch, lat.latent);
    let mut grads = LatentGrads::zeros(m * d);
    let log_nm = ((dataset_size.max(1) * m) as f64).ln();
    let inv_m = 1.0 / m as f64;

    // log q(z_id | x_j), laid out [i][j][d].
    let mut log_q = vec![0.0f64; m * m * d];
    for i in 0..m {
        for j in 0..m {
            for k in 0..d {
                let diff = lat.z[i * d + k] - lat.mean[j * d + k];
                let lv = lat.logvar[j * d + k];
                log_q[(i * m + j) * d + k] = -0.5 * (LOG_2PI + lv + diff * diff * (-lv).exp());
            }
        }
    }

    let mut total = 0.0;
    let mut joint = vec![0.0f64; m];
    let mut joint_w = vec![0.0f64; m];
    let mut marginal = vec![0.0f64; m];
    let mut marginal_w = vec![vec![0.0f64; m]; d];
    for i in 0..m {
        for j in 0..m {
            joint[j] = (0..d).map(|k| log_q[(i * m + j) * d + k]).sum();
        }
        let log_qz = log_sum_exp_and_softmax(&joint, &mut joint_w) - log_nm;
        let mut log_prod = 0.0;
        for (k, w) in marginal_w.iter_mut().enumerate() {
            for j in 0..m {
                marginal[j] = log_q[(i * m + j) * d + k];
            }
            log_prod += log_sum_exp_and_softmax(&marginal, w) - log_nm;
        }
        total += log_qz - log_prod;

        // d TC / d log q(z_ik | x_j) = (w_ij − v_ijk) / M
        for j in 0..m {
            for (k, w) in marginal_w.iter().enumerate() {
                let g = (joint_w[j] - w[j]) * inv_m;
                if g == 0.0 {
                    continue;
                }
                let diff = lat.z[i * d + k] - lat.mean[j * d + k];
                let prec = (-lat.logvar[j * d + k]).exp();
                grads.z[i * d + k] -= g * diff * prec;
                grads.mean[j * d + k] += g * diff * prec;
                grads.logvar[j * d + k] -= g * 0.5 * (1.0 - diff * diff * prec);
            }
        }
    }
    (total * inv_m, grads)
}
