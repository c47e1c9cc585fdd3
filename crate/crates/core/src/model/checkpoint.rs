//! Binary checkpoint format.
//!
//! Layout: the 8-byte magic `GPTCKPT1`, a little-endian `u32` header length
//! `N`, `N` bytes of UTF-8 JSON (an array of `{name, shape, offset}` with
//! byte offsets relative to the payload), then the payload of little-endian
//! `f32` values in canonical parameter order.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::model::{GptConfig, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GPTCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeaderEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut offset = 0;
    let header: Vec<HeaderEntry> = params
        .iter()
        .map(|(spec, t)| {
            let e = HeaderEntry { name: spec.name.clone(), shape: spec.shape.clone(), offset };
            offset += t.numel() * 4;
            e
        })
        .collect();
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in params.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint whose tensors must match `cfg` exactly.
pub fn from_bytes(bytes: &[u8], cfg: &GptConfig) -> Result<ModelParams> {
    let need = |needed: usize| -> Result<()> {
        if bytes.len() < needed {
            Err(CheckpointError::Truncated { needed, available: bytes.len() }.into())
        } else {
            Ok(())
        }
    };
    need(8)?;
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::Magic { found: bytes[..8].to_vec() }.into());
    }
    need(12)?;
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    need(12 + header_len)?;
    let header: Vec<HeaderEntry> = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload = &bytes[12 + header_len..];

    let specs = cfg.param_specs();
    let expected: HashMap<&str, &[usize]> = specs.iter().map(|s| (s.name.as_str(), s.shape.as_slice())).collect();
    let mut named = HashMap::with_capacity(header.len());
    for entry in &header {
        let Some(&shape) = expected.get(entry.name.as_str()) else {
            return Err(CheckpointError::NameMismatch(format!("unexpected tensor {}", entry.name)).into());
        };
        if shape != entry.shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                expected: shape.to_vec(),
                found: entry.shape.clone(),
            }
            .into());
        }
        let n: usize = shape.iter().product();
        let end = entry.offset + 4 * n;
        if payload.len() < end {
            return Err(CheckpointError::Truncated { needed: 12 + header_len + end, available: bytes.len() }.into());
        }
        let data = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if named.insert(entry.name.clone(), Tensor::new(shape.to_vec(), data)?).is_some() {
            return Err(CheckpointError::NameMismatch(format!("duplicate tensor {}", entry.name)).into());
        }
    }
    if let Some(missing) = specs.iter().find(|s| !named.contains_key(&s.name)) {
        return Err(CheckpointError::NameMismatch(format!("missing tensor {}", missing.name)).into());
    }
    ModelParams::from_named(cfg, named)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let bytes = to_bytes(params);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, cfg: &GptConfig) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, cfg)
}
