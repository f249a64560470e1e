//! Per-dataset instance distances in `[0, 1]`.

use super::TaskError;
use crate::datasets::{DatasetKind, Instance};

/// Timeseries points further apart than this count as disagreeing.
pub const SINELINES_TOLERANCE: f64 = 0.5;
/// Binarization threshold for MNIST images.
pub const MNIST_THRESHOLD: f32 = 0.5;

/// Fraction of disagreeing timeseries points.
pub fn sinelines_distance(a: &[f32], b: &[f32]) -> f64 {
    let far = a
        .iter()
        .zip(b)
        .filter(|(&x, &y)| (x as f64 - y as f64).abs() > SINELINES_TOLERANCE)
        .count();
    far as f64 / a.len() as f64
}

/// Bray-Curtis dissimilarity; two all-zero images are at distance 0.
pub fn bray_curtis(a: &[f32], b: &[f32]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        num += (x - y).abs();
        den += x.abs() + y.abs();
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// One minus the intersection-over-union of the binarized images; two blank
/// images are at distance 0.
pub fn iou_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x >= MNIST_THRESHOLD, y >= MNIST_THRESHOLD);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

pub fn distance(kind: DatasetKind, a: &Instance, b: &Instance) -> Result<f64, TaskError> {
    if a.kind != kind || b.kind != kind || a.shape != b.shape || a.data.len() != b.data.len() {
        return Err(TaskError::Domain(format!(
            "cannot compare {} {:?} with {} {:?} as {kind}",
            a.kind, a.shape, b.kind, b.shape
        )));
    }
    Ok(match kind {
        DatasetKind::Sinelines => sinelines_distance(&a.data, &b.data),
        DatasetKind::Dsprites | DatasetKind::Circles => bray_curtis(&a.data, &b.data),
        DatasetKind::Mnist => iou_distance(&a.data, &b.data),
    })
}
