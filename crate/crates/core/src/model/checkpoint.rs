//! Checkpoints: a JSON manifest next to a raw little-endian f32 blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParams, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "model.json";
pub const BLOB_FILE: &str = "model.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
    pub n_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub dtype: String,
    pub config: ModelConfig,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form provenance (language, stage, seed, ...).
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

pub fn save_checkpoint(
    params: &ModelParams<f32>,
    dir: impl AsRef<Path>,
    metadata: serde_json::Map<String, serde_json::Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(params.n_params() * 4);
    let mut entries = Vec::with_capacity(params.tensors.len());
    for t in &params.tensors {
        let offset = blob.len() as u64;
        for x in &t.data {
            blob.extend_from_slice(&x.to_le_bytes());
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            n_bytes: blob.len() as u64 - offset,
        });
    }
    let manifest = CheckpointManifest {
        format: "langtransfer-checkpoint/1".into(),
        dtype: "f32-le".into(),
        config: params.config,
        blob: BLOB_FILE.into(),
        tensors: entries,
        metadata,
    };
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let mpath = manifest_path(dir);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let mpath = manifest_path(dir.as_ref());
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelParams<f32>, CheckpointManifest)> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let blob_path = dir.join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let (start, len) = (e.offset as usize, e.n_bytes as usize);
        if len != 4 * n || start + len > blob.len() {
            return Err(Error::format(&blob_path, format!("tensor '{}' has an inconsistent extent", e.name)));
        }
        let data = blob[start..start + len]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    let params = ModelParams::from_tensors(manifest.config, tensors)?;
    Ok((params, manifest))
}
