//! Precomputed per-token states produced outside this crate.
//!
//! JSONL, one object per sample: `{"id": "...", "embedding": [[f64; D]; T]}`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EmbeddingFileError {
    #[error("embedding file io: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding file line {line}: {reason}")]
    Line { line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct Row {
    id: String,
    embedding: Vec<Vec<f64>>,
}

pub fn read(path: &Path) -> Result<BTreeMap<String, Tensor<f64>>, EmbeddingFileError> {
    let file = std::fs::File::open(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| EmbeddingFileError::Line {
            line: i + 1,
            reason,
        };
        let row: Row = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if row.embedding.is_empty() {
            return Err(err("empty embedding".into()));
        }
        let dim = row.embedding[0].len();
        if dim == 0 || row.embedding.iter().any(|r| r.len() != dim) {
            return Err(err("ragged or empty rows".into()));
        }
        if row.embedding.iter().flatten().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let t = Tensor::from_rows(&row.embedding);
        if out.insert(row.id.clone(), t).is_some() {
            return Err(err(format!("duplicate id {}", row.id)));
        }
    }
    Ok(out)
}

pub fn write(path: &Path, rows: &BTreeMap<String, Tensor<f64>>) -> Result<(), EmbeddingFileError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, t) in rows {
        let row = Row {
            id: id.clone(),
            embedding: (0..t.rows()).map(|i| t.row(i).to_vec()).collect(),
        };
        serde_json::to_writer(&mut f, &row).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
