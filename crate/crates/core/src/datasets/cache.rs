//! JSON-lines dataset cache, one `{z, x}` record per line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetKind, Instance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub z: Vec<f64>,
    pub x: Vec<f32>,
}

pub fn write_cache<'a>(
    path: &Path,
    records: impl IntoIterator<Item = (&'a [f64], &'a Instance)>,
) -> Result<usize, DatasetError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let mut n = 0;
    for (z, x) in records {
        let line = serde_json::to_string(&CacheRecord {
            z: z.to_vec(),
            x: x.data.clone(),
        })
        .expect("cache records serialize");
        writeln!(out, "{line}")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

pub fn read_cache(path: &Path, kind: DatasetKind) -> Result<Vec<(Vec<f64>, Instance)>, DatasetError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Format {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        out.push((rec.z, Instance::new(kind, rec.x)?));
    }
    Ok(out)
}
