//! IDX-format MNIST reader.

use std::path::Path;

use super::{DatasetError, DatasetKind, DatasetSplit, Instance, Item};

pub const MNIST_SIDE: usize = 28;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn format_err(path: &Path, reason: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads an IDX image file into row-major images scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<f32>>), DatasetError> {
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0).ok_or_else(|| format_err(path, "file shorter than header"))?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(path, format!("bad magic number {magic:#010x}")));
    }
    let header = (1..4)
        .map(|i| be_u32(&bytes, 4 * i).map(|v| v as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| format_err(path, "truncated header"))?;
    let (n, rows, cols) = (header[0], header[1], header[2]);
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(format_err(
            path,
            format!("expected {} pixel bytes, found {}", n * rows * cols, body.len()),
        ));
    }
    let images = body
        .chunks_exact((rows * cols).max(1))
        .take(n)
        .map(|img| img.iter().map(|&p| p as f32 / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0).ok_or_else(|| format_err(path, "file shorter than header"))?;
    if magic != LABELS_MAGIC {
        return Err(format_err(path, format!("bad magic number {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4).ok_or_else(|| format_err(path, "truncated header"))? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(format_err(
            path,
            format!("expected {n} labels, found {}", body.len()),
        ));
    }
    if let Some(bad) = body.iter().position(|&l| l > 9) {
        return Err(format_err(path, format!("label {} at index {bad}", body[bad])));
    }
    Ok(body.to_vec())
}

/// Loads MNIST at native 28×28 with a label-stratified heldout split.
pub fn mnist_load(images_path: &Path, labels_path: &Path, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let (rows, cols, images) = read_idx_images(images_path)?;
    if (rows, cols) != (MNIST_SIDE, MNIST_SIDE) {
        return Err(format_err(
            images_path,
            format!("images are {rows}×{cols}, expected 28×28"),
        ));
    }
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != images.len() {
        return Err(format_err(
            labels_path,
            format!("{} labels for {} images", labels.len(), images.len()),
        ));
    }
    let items = images
        .into_iter()
        .zip(labels)
        .map(|(data, label)| Item {
            factors: None,
            label: Some(label),
            x: Instance::from_trusted(DatasetKind::Mnist, data),
        })
        .collect();
    Ok(DatasetSplit::from_items(DatasetKind::Mnist, &[], items, seed, true))
}
