//! Procedural sprite renderer and loader for the published dSprites archive.
//!
//! Factor order everywhere is `(shape, scale, rotation, x-position, y-position)`.
//! Shape is categorical (`0 = square, 1 = ellipse, 2 = heart`); the others are
//! continuous, with scale in `[0.5, 1]`, rotation in radians and positions in `[0, 1]`.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Ix2, Ix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, DatasetKind, DatasetSplit, Instance, Item};

pub const DSPRITES_RESOLUTION: usize = 64;
pub const DSPRITES_FACTOR_NAMES: &[&str] = &["shape", "scale", "rotation", "x", "y"];

/// Half-extent in pixels of a sprite at scale 1.
const BASE_HALF_EXTENT: f64 = 10.0;
/// Sprite centers sweep this many pixels as a position factor goes 0 → 1.
const POSITION_SPAN: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpriteShape {
    Square,
    Ellipse,
    Heart,
}

impl SpriteShape {
    pub const ALL: [SpriteShape; 3] = [SpriteShape::Square, SpriteShape::Ellipse, SpriteShape::Heart];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpriteFactors {
    pub shape: SpriteShape,
    pub scale: f64,
    pub rotation: f64,
    pub x: f64,
    pub y: f64,
}

impl SpriteFactors {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.shape.index() as f64, self.scale, self.rotation, self.x, self.y]
    }

    /// Parses a factor vector; the shape entry is rounded to the nearest class.
    pub fn from_slice(z: &[f64]) -> Result<Self, DatasetError> {
        if z.len() != 5 {
            return Err(DatasetError::Domain(format!(
                "dsprites needs 5 factors, got {}",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Domain("non-finite dsprites factor".into()));
        }
        let shape = if z[0] >= -0.5 && z[0] < 2.5 {
            SpriteShape::from_index(z[0].round() as usize)
        } else {
            None
        }
        .ok_or_else(|| DatasetError::Domain(format!("shape index {} out of range", z[0])))?;
        Ok(Self {
            shape,
            scale: z[1],
            rotation: z[2],
            x: z[3],
            y: z[4],
        })
    }
}

/// Factor lattice of the procedural dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DspritesGrid {
    pub scales: usize,
    pub rotations: usize,
    pub positions: usize,
    /// Number of lattice points materialized into the dataset.
    pub items: usize,
}

impl Default for DspritesGrid {
    fn default() -> Self {
        Self {
            scales: 6,
            rotations: 20,
            positions: 16,
            items: 15_360,
        }
    }
}

impl DspritesGrid {
    pub fn lattice_size(&self) -> usize {
        3 * self.scales * self.rotations * self.positions * self.positions
    }

    fn linspace(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        if n == 1 {
            return vec![(lo + hi) / 2.0];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn factors_at(&self, mut index: usize) -> SpriteFactors {
        let y = index % self.positions;
        index /= self.positions;
        let x = index % self.positions;
        index /= self.positions;
        let r = index % self.rotations;
        index /= self.rotations;
        let s = index % self.scales;
        index /= self.scales;
        let positions = Self::linspace(self.positions, 0.0, 1.0);
        SpriteFactors {
            shape: SpriteShape::from_index(index).expect("index within lattice"),
            scale: Self::linspace(self.scales, 0.5, 1.0)[s],
            rotation: std::f64::consts::TAU * r as f64 / self.rotations as f64,
            x: positions[x],
            y: positions[y],
        }
    }
}

fn inside(shape: SpriteShape, u: f64, v: f64) -> bool {
    match shape {
        SpriteShape::Square => u.abs() <= 1.0 && v.abs() <= 1.0,
        SpriteShape::Ellipse => u * u + (2.0 * v) * (2.0 * v) <= 1.0,
        SpriteShape::Heart => {
            // Implicit heart curve, flipped so the point faces down in image rows.
            let (a, b) = (1.15 * u, -1.15 * v + 0.1);
            let s = a * a + b * b - 1.0;
            s * s * s - a * a * b * b * b <= 0.0
        }
    }
}

/// Renders a binary sprite at `resolution × resolution`.
pub fn render_sprite(f: &SpriteFactors, resolution: usize) -> Vec<f32> {
    let unit = resolution as f64 / DSPRITES_RESOLUTION as f64;
    let half = BASE_HALF_EXTENT * f.scale * unit;
    let mid = (resolution as f64 - 1.0) / 2.0;
    let cx = mid + (f.x - 0.5) * POSITION_SPAN * unit;
    let cy = mid + (f.y - 0.5) * POSITION_SPAN * unit;
    let (sin, cos) = f.rotation.sin_cos();
    let mut out = vec![0.0f32; resolution * resolution];
    if half <= 0.0 {
        return out;
    }
    for row in 0..resolution {
        let dy = row as f64 - cy;
        for col in 0..resolution {
            let dx = col as f64 - cx;
            // Rotate the pixel into the sprite frame.
            let u = (cos * dx + sin * dy) / half;
            let v = (-sin * dx + cos * dy) / half;
            if inside(f.shape, u, v) {
                out[row * resolution + col] = 1.0;
            }
        }
    }
    out
}

pub fn dsprites_procedural(grid: DspritesGrid, seed: u64) -> DatasetSplit {
    let lattice = grid.lattice_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = if grid.items >= lattice {
        (0..lattice).collect()
    } else {
        sample(&mut rng, lattice, grid.items).into_vec()
    };
    picks.sort_unstable();
    let items = picks
        .into_iter()
        .map(|i| {
            let f = grid.factors_at(i);
            Item {
                factors: Some(f.to_vec()),
                label: None,
                x: Instance::from_trusted(
                    DatasetKind::Dsprites,
                    render_sprite(&f, DSPRITES_RESOLUTION),
                ),
            }
        })
        .collect();
    let mut split =
        DatasetSplit::from_items(DatasetKind::Dsprites, DSPRITES_FACTOR_NAMES, items, seed, false);
    split.metadata.insert(
        "procedural".into(),
        serde_json::json!({
            "scales": grid.scales,
            "rotations": grid.rotations,
            "positions": grid.positions,
            "items": split.len(),
            "lattice": lattice,
            "note": "procedural stand-in for the published factor discretization",
        }),
    );
    split
}

#[derive(Debug, Clone, PartialEq)]
pub enum DspritesSource {
    Procedural(DspritesGrid),
    /// Published NPZ archive with `imgs` (N×64×64 u8) and `latents_values` (N×6 f64).
    File { path: PathBuf, max_items: Option<usize> },
}

pub fn dsprites_load_or_generate(source: &DspritesSource, seed: u64) -> Result<DatasetSplit, DatasetError> {
    match source {
        DspritesSource::Procedural(grid) => Ok(dsprites_procedural(*grid, seed)),
        DspritesSource::File { path, max_items } => dsprites_load(path, *max_items, seed),
    }
}

/// Loads the published archive, optionally keeping a seeded subsample of `max_items`.
pub fn dsprites_load(path: &Path, max_items: Option<usize>, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let display = path.display().to_string();
    let load_err = |e: Box<dyn std::error::Error + Send + Sync>| DatasetError::Load {
        path: display.clone(),
        source: e,
    };
    let file = std::fs::File::open(path)?;
    let mut npz = ndarray_npy::NpzReader::new(file).map_err(|e| load_err(Box::new(e)))?;
    let imgs: Array3<u8> = read_npz_array::<u8, Ix3>(&mut npz, "imgs").map_err(&load_err)?;
    let latents: Array2<f64> =
        read_npz_array::<f64, Ix2>(&mut npz, "latents_values").map_err(&load_err)?;

    let format = |reason: String| DatasetError::Format {
        path: display.clone(),
        reason,
    };
    let n = imgs.shape()[0];
    if imgs.shape()[1..] != [DSPRITES_RESOLUTION, DSPRITES_RESOLUTION] {
        return Err(format(format!("imgs has shape {:?}", imgs.shape())));
    }
    if latents.shape() != [n, 6] {
        return Err(format(format!(
            "latents_values has shape {:?}, expected [{n}, 6]",
            latents.shape()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = match max_items {
        Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
        _ => (0..n).collect(),
    };
    keep.sort_unstable();

    let mut items = Vec::with_capacity(keep.len());
    for i in keep {
        let row = latents.row(i);
        // Columns: color, shape (1-based), scale, orientation, posX, posY.
        let shape = row[1] - 1.0;
        if !(0.0..=2.0).contains(&shape) {
            return Err(format(format!("row {i}: shape value {} not in 1..=3", row[1])));
        }
        let data: Vec<f32> = imgs
            .index_axis(ndarray::Axis(0), i)
            .iter()
            .map(|&p| if p > 0 { 1.0 } else { 0.0 })
            .collect();
        items.push(Item {
            factors: Some(vec![shape.round(), row[2], row[3], row[4], row[5]]),
            label: None,
            x: Instance::from_trusted(DatasetKind::Dsprites, data),
        });
    }
    let mut split =
        DatasetSplit::from_items(DatasetKind::Dsprites, DSPRITES_FACTOR_NAMES, items, seed, false);
    split
        .metadata
        .insert("source".into(), serde_json::json!(path.display().to_string()));
    Ok(split)
}

fn read_npz_array<A, D>(
    npz: &mut ndarray_npy::NpzReader<std::fs::File>,
    name: &str,
) -> Result<ndarray::Array<A, D>, Box<dyn std::error::Error + Send + Sync>>
where
    A: ndarray_npy::ReadableElement,
    D: ndarray::Dimension,
{
    match npz.by_name(name) {
        Ok(a) => Ok(a),
        Err(_) => Ok(npz.by_name(&format!("{name}.npy"))?),
    }
}
