//! Permitted domains and the sampling distribution of a model's representation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use super::{GenerativeModel, ModelError};
use crate::datasets::Item;

/// Dimensions whose heldout range is narrower than this are flagged inactive.
pub const DEGENERATE_WIDTH: f64 = 1e-9;
/// Half-width given to inactive dimensions around their constant value.
pub const INACTIVE_HALF_WIDTH: f64 = 1e-3;
/// Prior quantiles used as slider limits for models without heldout encodings.
pub const PRIOR_QUANTILES: (f64, f64) = (0.005, 0.995);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DimDomain {
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        inactive: bool,
    },
    Discrete {
        support: Vec<f64>,
    },
}

impl DimDomain {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            DimDomain::Continuous { lo, hi, .. } => v.is_finite() && *lo <= v && v <= *hi,
            DimDomain::Discrete { support } => support.contains(&v),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DimDomain::Discrete { .. })
    }

    /// Slider width; discrete dimensions count as width 1.
    pub fn width(&self) -> f64 {
        match self {
            DimDomain::Continuous { lo, hi, .. } => hi - lo,
            DimDomain::Discrete { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorDim {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Categorical { k: usize },
}

impl PriorDim {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            PriorDim::Normal { mean, std } => Normal::new(mean, std)
                .expect("validated prior")
                .sample(rng),
            PriorDim::Uniform { lo, hi } => rng.random_range(lo..=hi),
            PriorDim::Categorical { k } => rng.random_range(0..k) as f64,
        }
    }

    fn domain(&self) -> Result<DimDomain, ModelError> {
        Ok(match *self {
            PriorDim::Normal { mean, std } => {
                let n = NormalDist::new(mean, std)
                    .map_err(|e| ModelError::Config(format!("bad normal prior: {e}")))?;
                DimDomain::Continuous {
                    lo: n.inverse_cdf(PRIOR_QUANTILES.0),
                    hi: n.inverse_cdf(PRIOR_QUANTILES.1),
                    inactive: false,
                }
            }
            PriorDim::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return Err(ModelError::Config(format!("uniform prior [{lo}, {hi}] is empty")));
                }
                DimDomain::Continuous {
                    lo: lo + (hi - lo) * PRIOR_QUANTILES.0,
                    hi: lo + (hi - lo) * PRIOR_QUANTILES.1,
                    inactive: false,
                }
            }
            PriorDim::Categorical { k } => {
                if k == 0 {
                    return Err(ModelError::Config("categorical prior with no classes".into()));
                }
                DimDomain::Discrete {
                    support: (0..k).map(|v| v as f64).collect(),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSource {
    HeldoutEmpirical,
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSpec {
    pub dims: Vec<DimDomain>,
    pub source: SamplingSource,
    /// User-assigned control labels, one slot per dimension.
    #[serde(default)]
    pub labels: Vec<Option<String>>,
    /// Heldout representation values backing the empirical distribution.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior: Vec<PriorDim>,
}

impl RepresentationSpec {
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn inactive_dims(&self) -> Vec<usize> {
        self.dims
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d, DimDomain::Continuous { inactive: true, .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self, z: &[f64]) -> Result<(), ModelError> {
        if z.len() != self.dims.len() {
            return Err(ModelError::Domain(format!(
                "representation has {} dims, got {}",
                self.dims.len(),
                z.len()
            )));
        }
        for (i, (v, d)) in z.iter().zip(&self.dims).enumerate() {
            if !d.contains(*v) {
                return Err(ModelError::Domain(format!("dim {i}: value {v} outside {d:?}")));
            }
        }
        Ok(())
    }

    /// Draws one representation value from the sampling source.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<f64>, ModelError> {
        match self.source {
            SamplingSource::HeldoutEmpirical => {
                if self.samples.is_empty() {
                    return Err(ModelError::Domain("empirical source has no samples".into()));
                }
                Ok(self.samples[rng.random_range(0..self.samples.len())].clone())
            }
            SamplingSource::Prior => {
                // Resample out-of-limit tails so draws stay inside the slider ranges.
                let mut z = Vec::with_capacity(self.prior.len());
                for (p, d) in self.prior.iter().zip(&self.dims) {
                    let mut v = p.sample(rng);
                    let mut tries = 0;
                    while !d.contains(v) {
                        tries += 1;
                        if tries > 1000 {
                            return Err(ModelError::Domain("prior sampler exhausted".into()));
                        }
                        v = p.sample(rng);
                    }
                    z.push(v);
                }
                Ok(z)
            }
        }
    }

    pub fn from_prior(prior: &[PriorDim]) -> Result<Self, ModelError> {
        Ok(Self {
            dims: prior.iter().map(PriorDim::domain).collect::<Result<_, _>>()?,
            source: SamplingSource::Prior,
            labels: vec![None; prior.len()],
            samples: Vec::new(),
            prior: prior.to_vec(),
        })
    }

    /// Builds slider domains from representation values of heldout data.
    pub fn from_samples(layout: &[super::DimKind], samples: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if samples.is_empty() {
            return Err(ModelError::Domain("heldout split is empty".into()));
        }
        let mut dims = Vec::with_capacity(layout.len());
        for (i, kind) in layout.iter().enumerate() {
            match kind {
                super::DimKind::Discrete { cardinality } => dims.push(DimDomain::Discrete {
                    support: (0..*cardinality).map(|v| v as f64).collect(),
                }),
                super::DimKind::Continuous => {
                    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
                        (lo.min(z[i]), hi.max(z[i]))
                    });
                    if hi - lo < DEGENERATE_WIDTH {
                        let mid = (lo + hi) / 2.0;
                        dims.push(DimDomain::Continuous {
                            lo: mid - INACTIVE_HALF_WIDTH,
                            hi: mid + INACTIVE_HALF_WIDTH,
                            inactive: true,
                        });
                    } else {
                        dims.push(DimDomain::Continuous { lo, hi, inactive: false });
                    }
                }
            }
        }
        Ok(Self {
            labels: vec![None; dims.len()],
            dims,
            source: SamplingSource::HeldoutEmpirical,
            samples,
            prior: Vec::new(),
        })
    }
}

/// Slider ranges and sampling distribution for `model`: empirical heldout
/// encodings, or prior quantiles for models imported with a prior.
pub fn representation_spec(model: &GenerativeModel, heldout: &[Item]) -> Result<RepresentationSpec, ModelError> {
    if let Some(prior) = &model.prior {
        return RepresentationSpec::from_prior(prior);
    }
    if heldout.is_empty() {
        return Err(ModelError::Domain("heldout split is empty".into()));
    }
    let samples = model.represent_batch(heldout)?;
    RepresentationSpec::from_samples(&model.layout, samples)
}
