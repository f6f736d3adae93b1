//! Checkpoints as a JSON manifest next to a little-endian `f32` blob.
//!
//! `save_checkpoint(.., "run/best.json")` writes `run/best.json` and
//! `run/best.bin`. The manifest records the schema version, the model
//! configuration and its SHA-256, each tensor's name, shape, dtype and
//! element offset into the blob, the training step and an optional metric
//! snapshot.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::real_serde;
use crate::model::{param_count, ModelConfig, ParamStore, ParamTensor};

pub const CHECKPOINT_SCHEMA: &str = "deshadow-checkpoint/1";
const DTYPE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    #[serde(with = "real_serde")]
    pub psnr: f64,
    #[serde(with = "real_serde")]
    pub ssim: f64,
    #[serde(with = "real_serde")]
    pub rmse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: usize,
    pub metrics: Option<MetricSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Offset into the blob, in elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub config: ModelConfig,
    pub config_hash: String,
    pub param_count: usize,
    pub step: usize,
    pub metrics: Option<MetricSnapshot>,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

/// Hex SHA-256 of the configuration's TOML text.
pub fn config_hash(cfg: &ModelConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Path of the blob that belongs to a manifest path.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(
    params: &ParamStore,
    cfg: &ModelConfig,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<Manifest> {
    let path = path.as_ref();
    params.check_against(cfg)?;
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters being saved".into()));
    }
    let blob_file = blob_path(path);
    let mut blob = Vec::with_capacity(params.param_count() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_owned(),
            shape: t.shape.clone(),
            dtype: DTYPE.to_owned(),
            offset,
        });
        offset += t.numel();
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        schema_version: CHECKPOINT_SCHEMA.to_owned(),
        config: cfg.clone(),
        config_hash: config_hash(cfg)?,
        param_count: params.param_count(),
        step: meta.step,
        metrics: meta.metrics,
        blob: blob_file
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("bad checkpoint path {}", path.display())))?
            .to_owned(),
        tensors,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&blob_file, &blob)?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(manifest)
}

/// Read only the manifest.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::unreadable(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(format!("manifest: {e}")))?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_str())
        .unwrap_or("<missing>");
    if found != CHECKPOINT_SCHEMA {
        return Err(Error::SchemaVersion {
            found: found.to_owned(),
            expected: CHECKPOINT_SCHEMA.to_owned(),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(format!("manifest: {e}")))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, ModelConfig, CheckpointMeta)> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let cfg = manifest.config.clone();
    cfg.validate()?;
    if config_hash(&cfg)? != manifest.config_hash {
        return Err(Error::CorruptCheckpoint("configuration does not match its recorded hash".into()));
    }

    let blob_file = path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob_file).map_err(|e| Error::unreadable(&blob_file, e))?;
    let total: usize = manifest.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if bytes.len() != total * 4 {
        return Err(Error::CorruptCheckpoint(format!(
            "blob holds {} bytes, manifest describes {}",
            bytes.len(),
            total * 4
        )));
    }
    if total != manifest.param_count || total != param_count(&cfg) {
        return Err(Error::CorruptCheckpoint(format!(
            "manifest describes {total} values, configuration needs {}",
            param_count(&cfg)
        )));
    }

    let mut entries = IndexMap::with_capacity(manifest.tensors.len());
    let mut expected_offset = 0;
    for t in &manifest.tensors {
        if t.dtype != DTYPE {
            return Err(Error::CorruptCheckpoint(format!("tensor `{}` has dtype {}", t.name, t.dtype)));
        }
        if t.offset != expected_offset {
            return Err(Error::CorruptCheckpoint(format!("tensor `{}` has offset {}", t.name, t.offset)));
        }
        let n: usize = t.shape.iter().product();
        let data = bytes[t.offset * 4..(t.offset + n) * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        expected_offset += n;
        let prev = entries.insert(
            t.name.clone(),
            ParamTensor {
                shape: t.shape.clone(),
                data,
            },
        );
        if prev.is_some() {
            return Err(Error::CorruptCheckpoint(format!("tensor `{}` appears twice", t.name)));
        }
    }
    let params = ParamStore::from_entries(entries)?;
    params.check_against(&cfg)?;
    Ok((
        params,
        cfg,
        CheckpointMeta {
            step: manifest.step,
            metrics: manifest.metrics,
        },
    ))
}
