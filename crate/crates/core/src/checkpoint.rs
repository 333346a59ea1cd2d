//! Binary checkpoint format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic b"FBCKPT01"
//! 8       8     manifest length M, u64 little-endian
//! 16      M     manifest, UTF-8 JSON: {"config": ModelConfig, "tensors": [{"name", "shape"}]}
//! 16+M    8·K   every tensor's values as f64 little-endian, in manifest order, row-major
//! ```
//!
//! Loading checks that the manifest's tensor list equals the layout implied by
//! its config and that the payload holds exactly the declared number of values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 8] = b"FBCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let manifest = Manifest {
        config: params.config,
        tensors: params
            .config
            .tensor_layout()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect(),
    };
    let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(16 + manifest.len() + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic header"));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let manifest_end = usize::try_from(manifest_len)
        .ok()
        .and_then(|m| m.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[16..manifest_end])
        .map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;
    manifest
        .config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;

    let expected = manifest.config.tensor_layout();
    if manifest.tensors.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "config implies {} tensors, manifest lists {}",
            expected.len(),
            manifest.tensors.len()
        )));
    }
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
        if entry.name != *name || entry.shape != *shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, config implies {name} {shape:?}",
                entry.name, entry.shape
            )));
        }
    }

    let payload = &bytes[manifest_end..];
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            total * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let tensors = expected
        .iter()
        .map(|(_, shape)| values.by_ref().take(shape.iter().product()).collect())
        .collect();
    ModelParams::from_tensors(manifest.config, tensors)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ModelConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode(&bytes)?;
    let config = params.config;
    Ok((params, config))
}
