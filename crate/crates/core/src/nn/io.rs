//! Model files: `manifest.json` (layer specs, tensor table, metadata) plus
//! `params.f32`, a little-endian `f32` blob in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerSpec};
use super::model::{ArchConfig, DenseHead, EmbeddingKind, EmbeddingModel};
use super::sequential::Sequential;
use crate::error::{Error, Result};
use crate::signal::io::{bytes_to_f32s, f32s_to_bytes, read_json, write_atomic, write_json, SCHEMA_VERSION};

pub const MODEL_MANIFEST: &str = "manifest.json";
pub const MODEL_BLOB: &str = "params.f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub schema_version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub networks: Vec<NetworkEntry>,
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub kind: String,
    pub meta: serde_json::Value,
    pub networks: Vec<(String, Sequential)>,
}

impl ModelFile {
    pub fn take(&mut self, name: &str) -> Result<Sequential> {
        let i = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Schema(format!("model file has no network {name:?}")))?;
        Ok(self.networks.remove(i).1)
    }
}

pub fn save_model(dir: &Path, kind: &str, meta: serde_json::Value, networks: &[(&str, &Sequential)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, net) in networks {
        let mut tensors = Vec::new();
        for (tname, values) in net.state() {
            tensors.push(TensorEntry {
                name: tname,
                offset: blob.len(),
                len: values.len(),
            });
            blob.extend(values.iter().map(|&v| v as f32));
        }
        entries.push(NetworkEntry {
            name: (*name).to_string(),
            layers: net.specs(),
            tensors,
        });
    }
    write_atomic(&dir.join(MODEL_BLOB), &f32s_to_bytes(&blob))?;
    write_json(
        &dir.join(MODEL_MANIFEST),
        &ModelManifest {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            meta,
            networks: entries,
        },
    )
}

pub fn load_model(dir: &Path) -> Result<ModelFile> {
    let manifest: ModelManifest = read_json(&dir.join(MODEL_MANIFEST))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "model schema version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let blob_path = dir.join(MODEL_BLOB);
    let bytes = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let blob = bytes_to_f32s(&bytes)?;
    let mut networks = Vec::new();
    for entry in manifest.networks {
        let mut net = Sequential::from_specs(&entry.layers, 0)
            .map_err(|e| Error::Schema(format!("network {}: {e}", entry.name)))?;
        let mut state = net.state_mut();
        if state.len() != entry.tensors.len() {
            return Err(Error::Schema(format!(
                "network {} declares {} tensors, its layers hold {}",
                entry.name,
                entry.tensors.len(),
                state.len()
            )));
        }
        for ((name, dst), t) in state.iter_mut().zip(&entry.tensors) {
            if *name != t.name || dst.len() != t.len || t.offset + t.len > blob.len() {
                return Err(Error::Schema(format!(
                    "tensor {} of network {} does not match its layer or the blob",
                    t.name, entry.name
                )));
            }
            for (d, s) in dst.iter_mut().zip(&blob[t.offset..t.offset + t.len]) {
                *d = f64::from(*s);
            }
        }
        drop(state);
        networks.push((entry.name, net));
    }
    Ok(ModelFile {
        kind: manifest.kind,
        meta: manifest.meta,
        networks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingMeta {
    kind: EmbeddingKind,
    arch: ArchConfig,
    seed: u64,
    embedding_dim: usize,
}

/// Metadata describing an embedding network inside a model file.
pub fn embedding_meta(model: &EmbeddingModel) -> serde_json::Value {
    serde_json::to_value(EmbeddingMeta {
        kind: model.kind,
        arch: model.arch.clone(),
        seed: model.seed,
        embedding_dim: model.embedding_dim,
    })
    .expect("serializable")
}

/// Rebuild an embedding model from its metadata and loaded network.
pub fn embedding_from_parts(meta: &serde_json::Value, net: Sequential) -> Result<EmbeddingModel> {
    let m: EmbeddingMeta =
        serde_json::from_value(meta.clone()).map_err(|e| Error::Schema(format!("embedding metadata: {e}")))?;
    if m.arch.embedding_dim()? != m.embedding_dim {
        return Err(Error::Schema("embedding dimension disagrees with architecture".into()));
    }
    let model = EmbeddingModel {
        kind: m.kind,
        arch: m.arch,
        seed: m.seed,
        net,
        embedding_dim: m.embedding_dim,
    };
    model.check_layout().map_err(|e| Error::Schema(e.to_string()))?;
    Ok(model)
}

/// Rebuild a dense head from a loaded network, checking its fixed layout.
pub fn head_from_net(net: Sequential) -> Result<DenseHead> {
    match net.layers.as_slice() {
        [Layer::Dense(a), Layer::Elu { .. }, Layer::Dropout { p, .. }, Layer::Dense(b)] if a.outputs == b.inputs => {
            Ok(DenseHead {
                input_dim: a.inputs,
                hidden: a.outputs,
                classes: b.outputs,
                dropout: *p,
                net,
            })
        }
        _ => Err(Error::Schema("dense head must be dense, elu, dropout, dense".into())),
    }
}
