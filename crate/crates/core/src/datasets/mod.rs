//! Dataset generators and loaders.
//!
//! Every dataset yields [`Instance`]s of a fixed shape per [`DatasetKind`],
//! optionally paired with ground-truth factors (synthetic data) or a class
//! label (MNIST). Splits are deterministic given their seed.

mod cache;
mod circles;
mod dsprites;
mod mnist;
mod sinelines;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{read_cache, write_cache, CacheRecord};
pub use circles::{circles_decode, CIRCLES_RESOLUTION};
pub use dsprites::{
    dsprites_load, dsprites_load_or_generate, dsprites_procedural, render_sprite, DspritesGrid,
    DspritesSource, SpriteFactors, SpriteShape, DSPRITES_FACTOR_NAMES, DSPRITES_RESOLUTION,
};
pub use mnist::{mnist_load, read_idx_images, read_idx_labels, MNIST_SIDE};
pub use sinelines::{
    sinelines_decode, sinelines_sample, sinelines_split, sinelines_t_grid, SINELINES_FACTOR_NAMES,
    SINELINES_LEN, SINELINES_T_MAX,
};

/// Fraction of every dataset reserved for the heldout split.
pub const HELDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("failed to load {path}: {source}")]
    Load {
        path: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Sinelines,
    Dsprites,
    Mnist,
    Circles,
}

impl DatasetKind {
    pub fn instance_shape(self) -> Vec<usize> {
        match self {
            DatasetKind::Sinelines => vec![SINELINES_LEN],
            DatasetKind::Dsprites => vec![DSPRITES_RESOLUTION, DSPRITES_RESOLUTION],
            DatasetKind::Mnist => vec![MNIST_SIDE, MNIST_SIDE],
            DatasetKind::Circles => vec![CIRCLES_RESOLUTION, CIRCLES_RESOLUTION],
        }
    }

    pub fn instance_len(self) -> usize {
        self.instance_shape().iter().product()
    }

    /// Image datasets carry intensities in `[0, 1]`; timeseries are unbounded.
    pub fn is_image(self) -> bool {
        !matches!(self, DatasetKind::Sinelines)
    }

    pub fn is_synthetic(self) -> bool {
        !matches!(self, DatasetKind::Mnist)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Sinelines => "sinelines",
            DatasetKind::Dsprites => "dsprites",
            DatasetKind::Mnist => "mnist",
            DatasetKind::Circles => "circles",
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sinelines" => Ok(DatasetKind::Sinelines),
            "dsprites" => Ok(DatasetKind::Dsprites),
            "mnist" => Ok(DatasetKind::Mnist),
            "circles" => Ok(DatasetKind::Circles),
            other => Err(DatasetError::Domain(format!("unknown dataset kind {other:?}"))),
        }
    }
}

/// A decoded datum: a 64-point timeseries or a grayscale image in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub kind: DatasetKind,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Instance {
    /// Builds an instance, checking shape agreement and value ranges.
    pub fn new(kind: DatasetKind, data: Vec<f32>) -> Result<Self, DatasetError> {
        let shape = kind.instance_shape();
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(DatasetError::Domain(format!(
                "{kind} instance needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::Domain(format!("non-finite value at index {bad}")));
        }
        if kind.is_image() {
            if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(DatasetError::Domain(format!(
                    "pixel {bad} = {} outside [0, 1]",
                    data[bad]
                )));
            }
        }
        Ok(Self { kind, shape, data })
    }

    pub(crate) fn from_trusted(kind: DatasetKind, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), kind.instance_len());
        Self {
            kind,
            shape: kind.instance_shape(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ground-truth factor values of one synthetic example.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSample {
    pub z: Vec<f64>,
    pub factor_names: &'static [&'static str],
}

/// One dataset example: the instance plus whatever supervision the dataset offers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub x: Instance,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub kind: DatasetKind,
    pub factor_names: Vec<String>,
    pub train: Vec<Item>,
    pub heldout: Vec<Item>,
    pub seed: u64,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl DatasetSplit {
    /// Shuffles `items` with `seed` and moves [`HELDOUT_FRACTION`] of them to heldout.
    ///
    /// When `stratify` is set, the heldout fraction is taken per label.
    pub fn from_items(
        kind: DatasetKind,
        factor_names: &[&str],
        mut items: Vec<Item>,
        seed: u64,
        stratify: bool,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        items.shuffle(&mut rng);
        let (train, heldout) = if stratify {
            let mut by_label: BTreeMap<Option<u8>, Vec<Item>> = BTreeMap::new();
            for item in items {
                by_label.entry(item.label).or_default().push(item);
            }
            let mut train = Vec::new();
            let mut heldout = Vec::new();
            for (_, mut group) in by_label {
                let n_heldout = heldout_count(group.len());
                let rest = group.split_off(n_heldout);
                heldout.extend(group);
                train.extend(rest);
            }
            // Keep label groups interleaved so prefixes stay representative.
            train.shuffle(&mut rng);
            heldout.shuffle(&mut rng);
            (train, heldout)
        } else {
            let n_heldout = heldout_count(items.len());
            let train = items.split_off(n_heldout);
            (train, items)
        };
        Self {
            kind,
            factor_names: factor_names.iter().map(|s| s.to_string()).collect(),
            train,
            heldout,
            seed,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.heldout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_labels(&self) -> bool {
        self.train.iter().all(|i| i.label.is_some()) && !self.train.is_empty()
    }

    pub fn has_factors(&self) -> bool {
        self.train.iter().all(|i| i.factors.is_some()) && !self.train.is_empty()
    }
}

fn heldout_count(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * HELDOUT_FRACTION).round() as usize).clamp(1, n - 1)
}
