//! Ground-truth-based disentanglement: pairwise MI heatmaps, MIG and DCI.

mod dci;
mod mi;

use serde::{Deserialize, Serialize};

pub use dci::{boosted_importance, dci_from_importance, importance_matrix, BoostingConfig};
pub use mi::{
    entropy, mig, mig_from_heatmap, mutual_information, pairwise_mi, quantile_bins, MiHeatmap, DEFAULT_BINS,
};

use crate::datasets::Item;
use crate::models::{DimKind, GenerativeModel, ModelError};

/// Below this many samples the estimates are reported with a warning.
pub const MIN_RELIABLE_SAMPLES: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum DisentanglementError {
    #[error("need at least 2 learned dimensions, got {0}")]
    TooFewDims(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Continuous,
    Categorical,
}

/// Paired learned codes and true factors, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeFactorMatrix {
    codes: Vec<Vec<f64>>,
    factors: Vec<Vec<f64>>,
    pub factor_kinds: Vec<FactorKind>,
    n: usize,
}

impl CodeFactorMatrix {
    /// Builds the matrix from per-sample rows.
    pub fn from_rows(
        codes: &[Vec<f64>],
        factors: &[Vec<f64>],
        factor_kinds: Vec<FactorKind>,
    ) -> Result<Self, DisentanglementError> {
        let n = codes.len();
        if factors.len() != n {
            return Err(DisentanglementError::Shape(format!(
                "{n} code rows but {} factor rows",
                factors.len()
            )));
        }
        if n == 0 {
            return Err(DisentanglementError::Shape("no samples".into()));
        }
        let dz = codes[0].len();
        let k = factor_kinds.len();
        if codes.iter().any(|r| r.len() != dz) || factors.iter().any(|r| r.len() != k) {
            return Err(DisentanglementError::Shape("ragged rows".into()));
        }
        if codes.iter().chain(factors).flatten().any(|v| !v.is_finite()) {
            return Err(DisentanglementError::NonFinite("codes and factors must be finite".into()));
        }
        let transpose = |rows: &[Vec<f64>], w: usize| -> Vec<Vec<f64>> {
            (0..w).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
        };
        Ok(Self {
            codes: transpose(codes, dz),
            factors: transpose(factors, k),
            factor_kinds,
            n,
        })
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn code_dims(&self) -> usize {
        self.codes.len()
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn code_column(&self, j: usize) -> Vec<f64> {
        self.codes[j].clone()
    }

    pub fn factor_column(&self, k: usize) -> Vec<f64> {
        self.factors[k].clone()
    }

    /// Same data with learned dimensions reordered as `perm[new] = old`.
    pub fn permute_codes(&self, perm: &[usize]) -> Self {
        Self {
            codes: perm.iter().map(|&j| self.codes[j].clone()).collect(),
            ..self.clone()
        }
    }

    /// Applies `f` to one learned dimension.
    pub fn map_code(&self, j: usize, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.codes[j] = out.codes[j].iter().map(|&v| f(v)).collect();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub model_id: String,
    pub mig: f64,
    pub dci: f64,
    pub heatmap: MiHeatmap,
    pub importance: Vec<Vec<f64>>,
    pub bins: usize,
    pub regressor_config: BoostingConfig,
    pub samples: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn dci_disentanglement(m: &CodeFactorMatrix, cfg: &BoostingConfig) -> Result<f64, DisentanglementError> {
    if m.code_dims() < 2 {
        return Err(DisentanglementError::TooFewDims(m.code_dims()));
    }
    Ok(dci_from_importance(&importance_matrix(m, cfg))?.0)
}

pub fn evaluate(
    model_id: &str,
    m: &CodeFactorMatrix,
    bins: usize,
    cfg: &BoostingConfig,
) -> Result<DisentanglementReport, DisentanglementError> {
    if m.code_dims() < 2 {
        return Err(DisentanglementError::TooFewDims(m.code_dims()));
    }
    let mut warnings = Vec::new();
    if m.samples() < MIN_RELIABLE_SAMPLES {
        warnings.push(format!(
            "only {} samples; estimates below {MIN_RELIABLE_SAMPLES} samples are unreliable",
            m.samples()
        ));
    }
    let heatmap = pairwise_mi(m, bins)?;
    let (mig, w) = mig_from_heatmap(&heatmap)?;
    warnings.extend(w);
    let importance = importance_matrix(m, cfg);
    let (dci, w) = dci_from_importance(&importance)?;
    warnings.extend(w);
    for w in &warnings {
        tracing::warn!(model = model_id, "{w}");
    }
    Ok(DisentanglementReport {
        model_id: model_id.to_string(),
        mig,
        dci,
        heatmap,
        importance,
        bins,
        regressor_config: *cfg,
        samples: m.samples(),
        warnings,
    })
}

/// Pairs the model's representation of `items` with their ground-truth factors.
/// Factor kinds follow the ground-truth layout of the dataset.
pub fn code_factor_matrix(model: &GenerativeModel, items: &[Item]) -> Result<CodeFactorMatrix, DisentanglementError> {
    let factors: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            it.factors
                .clone()
                .ok_or_else(|| DisentanglementError::Shape("items lack ground-truth factors".into()))
        })
        .collect::<Result<_, _>>()?;
    let kinds = match GenerativeModel::ground_truth(model.dataset) {
        Ok(gt) => gt
            .layout
            .iter()
            .map(|d| match d {
                DimKind::Continuous => FactorKind::Continuous,
                DimKind::Discrete { .. } => FactorKind::Categorical,
            })
            .collect(),
        Err(_) => vec![FactorKind::Continuous; factors.first().map_or(0, Vec::len)],
    };
    let codes = model.represent_batch(items)?;
    CodeFactorMatrix::from_rows(&codes, &factors, kinds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn copy_of_uniform_discrete_factors_has_unit_mig() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![rng.random_range(0..10) as f64, rng.random_range(0..10) as f64])
            .collect();
        let m = CodeFactorMatrix::from_rows(&rows, &rows, vec![FactorKind::Categorical; 2]).unwrap();
        let h = pairwise_mi(&m, DEFAULT_BINS).unwrap();
        for k in 0..2 {
            assert!((h.values[k][k] - 10f64.ln()).abs() < 0.01);
            assert!(h.values[k][1 - k] < 0.05);
        }
        assert!((mig(&m, DEFAULT_BINS).unwrap() - 1.0).abs() <= 0.02);
    }

    #[test]
    fn rejects_bad_shapes() {
        let r = vec![vec![0.0, 1.0]];
        assert!(CodeFactorMatrix::from_rows(&r, &[], vec![]).is_err());
        assert!(CodeFactorMatrix::from_rows(&[vec![f64::NAN, 0.0]], &r, vec![FactorKind::Continuous; 2]).is_err());
        let one = CodeFactorMatrix::from_rows(&[vec![1.0]], &[vec![1.0]], vec![FactorKind::Continuous]).unwrap();
        assert!(matches!(mig(&one, 20), Err(DisentanglementError::TooFewDims(1))));
    }
}
