//! The single-dimension baseline task: guess whether a hidden dimension is
//! low, medium or high for a shown instance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::Regime;
use crate::datasets::Instance;
use crate::models::{DimDomain, RepresentationSpec};
use crate::task::{InstanceDecoder, TaskError};

/// Percentile ranges of the Low, Medium and High regimes.
pub const REGIME_PERCENTILES: [(f64, f64); 3] = [(1.0, 5.0), (48.0, 52.0), (95.0, 99.0)];
pub const MIN_ENCODINGS: usize = 100;
pub const TRAVERSAL_ROWS: usize = 5;
pub const TRAVERSAL_STEPS: usize = 7;
pub const EXEMPLARS_PER_BIN: usize = 8;
pub const PERCENTILE_METHOD: &str = "linear interpolation between order statistics";

#[derive(Debug, thiserror::Error)]
pub enum SingleDimError {
    #[error("dimension {0} is constant over the heldout encodings")]
    DegenerateBins(usize),
    #[error("not enough heldout encodings: {0}")]
    Insufficient(String),
    #[error("dimension {0} is discrete")]
    Discrete(usize),
    #[error("no dimension {0}")]
    NoSuchDim(usize),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Percentile of sorted data with linear interpolation at rank `p/100·(n−1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeBins {
    pub dim: usize,
    pub low: (f64, f64),
    pub medium: (f64, f64),
    pub high: (f64, f64),
    pub method: String,
}

impl RegimeBins {
    pub fn from_values(dim: usize, values: &[f64]) -> Result<Self, SingleDimError> {
        if values.len() < MIN_ENCODINGS {
            return Err(SingleDimError::Insufficient(format!(
                "{} values, need {MIN_ENCODINGS}",
                values.len()
            )));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let [low, medium, high] = REGIME_PERCENTILES.map(|(a, b)| (percentile(&sorted, a), percentile(&sorted, b)));
        if !(low.1 < medium.0 && medium.1 < high.0) {
            return Err(SingleDimError::DegenerateBins(dim));
        }
        Ok(Self {
            dim,
            low,
            medium,
            high,
            method: PERCENTILE_METHOD.into(),
        })
    }

    pub fn interval(&self, r: Regime) -> (f64, f64) {
        match r {
            Regime::Low => self.low,
            Regime::Medium => self.medium,
            Regime::High => self.high,
        }
    }

    pub fn regime_of(&self, v: f64) -> Option<Regime> {
        Regime::ALL.into_iter().find(|&r| {
            let (lo, hi) = self.interval(r);
            lo <= v && v <= hi
        })
    }

    /// Seven values from the middle of Low to the middle of High.
    pub fn traversal_values(&self) -> Vec<f64> {
        let a = (self.low.0 + self.low.1) / 2.0;
        let b = (self.high.0 + self.high.1) / 2.0;
        (0..TRAVERSAL_STEPS)
            .map(|k| a + (b - a) * k as f64 / (TRAVERSAL_STEPS - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visualization {
    Traversal,
    Exemplar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdQuestion {
    pub dim: usize,
    pub regime: Regime,
    pub z: Vec<f64>,
    pub x: Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub correct: bool,
    pub feedback: Regime,
}

pub fn score_answer(q: &SdQuestion, answer: Regime) -> Score {
    Score {
        correct: answer == q.regime,
        feedback: q.regime,
    }
}

/// Decoded instances arranged in rows, with the hidden-dimension value of
/// each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalGrid {
    pub dim: usize,
    pub values: Vec<f64>,
    pub base: Vec<Vec<f64>>,
    pub rows: Vec<Vec<Instance>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarBin {
    pub regime: Regime,
    pub z: Vec<Vec<f64>>,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarPage {
    pub dim: usize,
    pub page: usize,
    pub bins: Vec<ExemplarBin>,
}

/// A model prepared for the single-dimension task: heldout encodings and the
/// regime bins of every continuous dimension.
pub struct SingleDim<D> {
    decoder: D,
    samples: Vec<Vec<f64>>,
    dims: Vec<DimDomain>,
    bins: Vec<Option<RegimeBins>>,
}

impl<D: InstanceDecoder> SingleDim<D> {
    /// Bins come from the heldout encodings stored in `spec`. Discrete and
    /// constant dimensions get no bins and are excluded from the task.
    pub fn new(decoder: D, spec: &RepresentationSpec) -> Result<Self, SingleDimError> {
        if spec.samples.len() < MIN_ENCODINGS {
            return Err(SingleDimError::Insufficient(format!(
                "{} heldout encodings, need {MIN_ENCODINGS}",
                spec.samples.len()
            )));
        }
        let bins = spec
            .dims
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                DimDomain::Continuous { .. } => {
                    let col: Vec<f64> = spec.samples.iter().map(|z| z[i]).collect();
                    RegimeBins::from_values(i, &col).ok()
                }
                DimDomain::Discrete { .. } => None,
            })
            .collect();
        Ok(Self {
            decoder,
            samples: spec.samples.clone(),
            dims: spec.dims.clone(),
            bins,
        })
    }

    pub fn decoder(&self) -> &D {
        &self.decoder
    }

    /// Dimensions eligible for questions.
    pub fn task_dims(&self) -> Vec<usize> {
        (0..self.bins.len()).filter(|&i| self.bins[i].is_some()).collect()
    }

    pub fn bins(&self, dim: usize) -> Result<&RegimeBins, SingleDimError> {
        match self.bins.get(dim) {
            None => Err(SingleDimError::NoSuchDim(dim)),
            Some(Some(b)) => Ok(b),
            Some(None) if self.dims[dim].is_discrete() => Err(SingleDimError::Discrete(dim)),
            Some(None) => Err(SingleDimError::DegenerateBins(dim)),
        }
    }

    fn override_dim(&self, base: &[f64], dim: usize, v: f64) -> Vec<f64> {
        let mut z = base.to_vec();
        z[dim] = v;
        z
    }

    pub fn sample_question(&self, dim: usize, regime: Regime, rng: &mut impl Rng) -> Result<SdQuestion, SingleDimError> {
        let (lo, hi) = self.bins(dim)?.interval(regime);
        let base = &self.samples[rng.random_range(0..self.samples.len())];
        let z = self.override_dim(base, dim, rng.random_range(lo..=hi));
        let x = self.decoder.decode(&z)?;
        Ok(SdQuestion { dim, regime, z, x })
    }

    /// Two questions per eligible dimension, in random order, with random regimes.
    pub fn session_questions(&self, rng: &mut impl Rng) -> Result<Vec<SdQuestion>, SingleDimError> {
        let mut plan: Vec<usize> = self.task_dims().into_iter().flat_map(|d| [d, d]).collect();
        plan.shuffle(rng);
        plan.into_iter()
            .map(|d| {
                let r = Regime::ALL[rng.random_range(0..3)];
                self.sample_question(d, r, rng)
            })
            .collect()
    }

    pub fn traversal(&self, dim: usize, rng: &mut impl Rng) -> Result<TraversalGrid, SingleDimError> {
        let values = self.bins(dim)?.traversal_values();
        let base: Vec<Vec<f64>> = (0..TRAVERSAL_ROWS)
            .map(|_| self.samples[rng.random_range(0..self.samples.len())].clone())
            .collect();
        let rows = base
            .iter()
            .map(|b| {
                values
                    .iter()
                    .map(|&v| self.decoder.decode(&self.override_dim(b, dim, v)).map_err(SingleDimError::from))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TraversalGrid { dim, values, base, rows })
    }

    /// Page `page` of exemplars. Pages draw base values from one seeded
    /// permutation of the heldout encodings, so pages never share a base
    /// until the encodings run out.
    pub fn exemplars(&self, dim: usize, seed: u64, page: usize) -> Result<ExemplarPage, SingleDimError> {
        let bins = self.bins(dim)?;
        let per_page = 3 * EXEMPLARS_PER_BIN;
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (page as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut out = Vec::with_capacity(3);
        for (b, regime) in Regime::ALL.into_iter().enumerate() {
            let (lo, hi) = bins.interval(regime);
            let mut z = Vec::with_capacity(EXEMPLARS_PER_BIN);
            for k in 0..EXEMPLARS_PER_BIN {
                let idx = order[(page * per_page + b * EXEMPLARS_PER_BIN + k) % order.len()];
                z.push(self.override_dim(&self.samples[idx], dim, rng.random_range(lo..=hi)));
            }
            let instances = z
                .iter()
                .map(|z| self.decoder.decode(z).map_err(SingleDimError::from))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(ExemplarBin { regime, z, instances });
        }
        Ok(ExemplarPage { dim, page, bins: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{sinelines_split, DatasetKind};
    use crate::models::{representation_spec, GenerativeModel};

    #[test]
    fn percentiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        // Brute force: rank p/100·99 on 1..=100 is 1 + p·0.99.
        for p in [1.0, 5.0, 48.0, 52.0, 95.0, 99.0] {
            assert!((percentile(&v, p) - (1.0 + p * 0.99)).abs() < 1e-12);
        }
        let b = RegimeBins::from_values(0, &v).unwrap();
        assert!(b.low.0 <= 1.99 + 1e-12 && b.low.1 >= 5.95 - 1e-12);
        assert!((b.medium.0 - 48.52).abs() < 1e-9 && (b.medium.1 - 52.48).abs() < 1e-9);
        assert!((b.high.0 - 95.05).abs() < 1e-9 && (b.high.1 - 99.01).abs() < 1e-9);
        assert!(b.low.1 < b.medium.0 && b.medium.1 < b.high.0);
        assert_eq!(b, RegimeBins::from_values(0, &v).unwrap());
        assert!(matches!(
            RegimeBins::from_values(3, &[2.0; 200]),
            Err(SingleDimError::DegenerateBins(3))
        ));
    }

    fn gt() -> (GenerativeModel, RepresentationSpec) {
        let split = sinelines_split(2000, 4);
        let m = GenerativeModel::ground_truth(DatasetKind::Sinelines).unwrap();
        let spec = representation_spec(&m, &split.heldout).unwrap();
        (m, spec)
    }

    #[test]
    fn questions_land_in_their_regime() {
        let (m, spec) = gt();
        let sd = SingleDim::new(&m, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in sd.task_dims() {
            for r in Regime::ALL {
                let q = sd.sample_question(dim, r, &mut rng).unwrap();
                // GT decoding is invertible: the hidden value is z itself.
                assert_eq!(sd.bins(dim).unwrap().regime_of(q.z[dim]), Some(r));
                assert!(score_answer(&q, r).correct);
                assert_eq!(score_answer(&q, Regime::ALL[(r as usize + 1) % 3]).feedback, r);
            }
        }
        let qs = sd.session_questions(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(qs.len(), 2 * sd.task_dims().len());
        let again = sd.session_questions(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(qs, again);
    }

    #[test]
    fn traversal_and_exemplar_shapes() {
        let (m, spec) = gt();
        let sd = SingleDim::new(&m, &spec).unwrap();
        let g = sd.traversal(0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!((g.rows.len(), g.rows[0].len()), (TRAVERSAL_ROWS, TRAVERSAL_STEPS));
        assert!(g.values.windows(2).all(|w| w[0] < w[1]));
        let p1 = sd.exemplars(1, 9, 0).unwrap();
        let p2 = sd.exemplars(1, 9, 1).unwrap();
        assert_eq!(p1.bins.iter().map(|b| b.instances.len()).sum::<usize>(), 24);
        let bins = sd.bins(1).unwrap();
        for b in &p1.bins {
            assert!(b.z.iter().all(|z| bins.regime_of(z[1]) == Some(b.regime)));
        }
        let other = |z: &Vec<f64>| z.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, v)| v.to_bits()).collect::<Vec<_>>();
        for a in p1.bins.iter().flat_map(|b| &b.z) {
            assert!(p2.bins.iter().flat_map(|b| &b.z).all(|b| other(a) != other(b)));
        }
        assert_eq!(p1, sd.exemplars(1, 9, 0).unwrap());
    }
}
