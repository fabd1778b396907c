//! Bit-exact checkpoint persistence.
//!
//! Layout: an 8-byte little-endian manifest length, the JSON manifest, then
//! every tensor's data concatenated as little-endian IEEE-754 f64. The
//! manifest directory lists model weights as `model.*` and optimizer moments
//! as `adam_m.*` / `adam_v.*`, in the parameter directory's stable order.
//! Loading rebuilds arrays from the stored config and verifies that every
//! expected tensor is present exactly once with its exact shape and offset,
//! so truncated, padded, or reshuffled files are rejected.

use crate::backbone::{BackboneConfig, BackboneParams};
use crate::error::{Error, Result};
use crate::trainer::{AdamWState, OptimizerConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Bumped only on incompatible layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// One tensor's entry in the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the data blob.
    pub offset: u64,
}

/// Self-describing header of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    /// Optimizer steps taken when the snapshot was written.
    pub step: u64,
    pub backbone: BackboneConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub tensors: Vec<TensorEntry>,
    /// Total blob length in bytes; the file must end exactly here.
    pub blob_len: u64,
}

/// A parsed checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: BackboneParams,
    pub opt_state: AdamWState,
    pub backbone: BackboneConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
}

fn directory<'a>(
    params: &'a BackboneParams,
    state: &'a AdamWState,
) -> Vec<(String, ndarray::ArrayViewD<'a, f64>)> {
    let mut out = Vec::new();
    for (prefix, set) in [("model", params), ("adam_m", &state.m), ("adam_v", &state.v)] {
        for (name, view) in set.tensors() {
            out.push((format!("{prefix}.{name}"), view));
        }
    }
    out
}

/// Serializes parameters, optimizer state, and configs; returns the manifest
/// that was written.
pub fn save_checkpoint(
    params: &BackboneParams,
    state: &AdamWState,
    backbone: &BackboneConfig,
    optimizer: &OptimizerConfig,
    train: &TrainConfig,
    path: &Path,
) -> Result<CheckpointManifest> {
    let dir = directory(params, state);
    let mut tensors = Vec::with_capacity(dir.len());
    let mut offset = 0u64;
    for (name, view) in &dir {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: view.shape().to_vec(),
            dtype: "f64".into(),
            offset,
        });
        offset += (view.len() * 8) as u64;
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        step: state.step,
        backbone: *backbone,
        optimizer: *optimizer,
        train: *train,
        tensors,
        blob_len: offset,
    };
    let manifest_json = serde_json::to_vec(&manifest)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&(manifest_json.len() as u64).to_le_bytes())?;
    file.write_all(&manifest_json)?;
    let mut blob = Vec::with_capacity(offset as usize);
    for (_, view) in &dir {
        for v in view.iter() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&blob)?;
    file.flush()?;
    Ok(manifest)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

/// Reads and validates a checkpoint, restoring every array bitwise.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(corrupt("file shorter than the manifest-length header"));
    }
    let manifest_len = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let blob_start = 8usize
        .checked_add(manifest_len)
        .ok_or_else(|| corrupt("manifest length overflows"))?;
    if bytes.len() < blob_start {
        return Err(corrupt(format!(
            "manifest claims {manifest_len} bytes but file holds {}",
            bytes.len() - 8
        )));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[8..blob_start])
        .map_err(|e| corrupt(format!("manifest does not parse: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {} unsupported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let blob = &bytes[blob_start..];
    if blob.len() as u64 != manifest.blob_len {
        return Err(corrupt(format!(
            "data blob is {} bytes, manifest expects {}",
            blob.len(),
            manifest.blob_len
        )));
    }

    manifest.backbone.validate()?;
    let mut params = BackboneParams::zeros(&manifest.backbone)?;
    let mut state = AdamWState::new(&manifest.backbone)?;
    state.step = manifest.step;

    // The expected directory is fully determined by the config; the file's
    // directory must match it entry for entry.
    let expected: Vec<(String, Vec<usize>)> = {
        let dir = directory(&params, &state);
        dir.iter().map(|(n, v)| (n.clone(), v.shape().to_vec())).collect()
    };
    if manifest.tensors.len() != expected.len() {
        return Err(corrupt(format!(
            "directory lists {} tensors, config requires {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut offset = 0u64;
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
        if &entry.name != name {
            return Err(corrupt(format!("tensor {} out of order (expected {name})", entry.name)));
        }
        if &entry.shape != shape {
            return Err(corrupt(format!(
                "tensor {} has shape {:?}, config requires {:?}",
                entry.name, entry.shape, shape
            )));
        }
        if entry.dtype != "f64" {
            return Err(corrupt(format!("tensor {} has dtype {}", entry.name, entry.dtype)));
        }
        if entry.offset != offset {
            return Err(corrupt(format!(
                "tensor {} at offset {}, expected {offset}",
                entry.name, entry.offset
            )));
        }
        offset += (shape.iter().product::<usize>() * 8) as u64;
    }
    if offset != manifest.blob_len {
        return Err(corrupt(format!(
            "directory covers {offset} bytes, blob holds {}",
            manifest.blob_len
        )));
    }

    let mut cursor = 0usize;
    {
        let mut param_dir = params.tensors_mut();
        let mut m_dir = state.m.tensors_mut();
        let mut v_dir = state.v.tensors_mut();
        let per_set = param_dir.len();
        for i in 0..manifest.tensors.len() {
            let target = if i < per_set {
                &mut param_dir[i].1
            } else if i < 2 * per_set {
                &mut m_dir[i - per_set].1
            } else {
                &mut v_dir[i - 2 * per_set].1
            };
            for v in target.iter_mut() {
                *v = f64::from_le_bytes(blob[cursor..cursor + 8].try_into().expect("8 bytes"));
                cursor += 8;
            }
        }
    }

    if !params.all_finite() {
        return Err(corrupt("restored parameters contain non-finite values"));
    }
    Ok(Checkpoint {
        params,
        opt_state: state,
        backbone: manifest.backbone,
        optimizer: manifest.optimizer,
        train: manifest.train,
    })
}
