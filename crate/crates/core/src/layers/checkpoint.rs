//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"SARCCKPT"
//! u32     format version
//! u64     metadata length, then UTF-8 JSON {"config": .., "extra": ..}
//! u64     tensor count
//! per tensor, in name order:
//!   u32 name length, UTF-8 name
//!   u32 rank, u64 per dimension
//!   f64 payload, row-major
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelConfig, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SARCCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("checkpoint tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    extra: serde_json::Value,
}

/// Serializes parameters plus caller metadata (vocabulary, window sizes, ...).
pub fn encode<T: Scalar>(params: &ModelParams<T>, extra: &serde_json::Value) -> Vec<u8> {
    let meta = serde_json::to_vec(&Metadata {
        config: params.config.clone(),
        extra: extra.clone(),
    })
    .expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(params.tensors.len() as u64).to_le_bytes());
    for (name, t) in &params.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(
    bytes: &[u8],
) -> Result<(ModelParams<T>, serde_json::Value), CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let meta_len = r.u64()? as usize;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)?;
    let count = r.u64()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name =
            String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| CheckpointError::Tensor {
                name: "<utf8>".into(),
                reason: e.to_string(),
            })?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated(r.pos))?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Tensor {
            name: name.clone(),
            reason: e.to_string(),
        })?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Tensor {
                name,
                reason: "duplicate name".into(),
            });
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Tensor {
            name: "<trailer>".into(),
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok((
        ModelParams {
            config: meta.config,
            tensors,
        },
        meta.extra,
    ))
}

pub fn save<T: Scalar>(
    path: &Path,
    params: &ModelParams<T>,
    extra: &serde_json::Value,
) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(params, extra))?;
    Ok(())
}

pub fn load<T: Scalar>(
    path: &Path,
) -> Result<(ModelParams<T>, serde_json::Value), CheckpointError> {
    decode(&std::fs::read(path)?)
}
