//! Checkpoints: a manifest plus one raw little-endian f32 blob per named
//! parameter. A checkpoint can be re-aligned with a family that has more or
//! fewer graphs than the one it was trained on — missing per-graph modules
//! are freshly initialized, extra ones are kept and warned about. That
//! re-alignment is the mechanism behind adapting a trained model to a new
//! graph.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamRefMut, ParamSet};
use super::scalar::Scalar;
use super::{ModelConfig, UniversalModel};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    config: ModelConfig,
    init_seed: u64,
    params: Vec<ParamEntry>,
    provenance: serde_json::Value,
}

fn blob_path(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join("params").join(format!("{name}.bin"))
}

/// Write `model` under `dir`. `provenance` is free-form run metadata
/// (regime, seeds, epochs, ...).
pub fn save_checkpoint<F: Scalar>(
    model: &UniversalModel<F>,
    dir: impl AsRef<Path>,
    provenance: serde_json::Value,
) -> Result<()> {
    let dir = dir.as_ref();
    let params_dir = dir.join("params");
    fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;

    let mut entries = Vec::new();
    let mut failure: Option<Error> = None;
    model.visit("", &mut |name, p| {
        if failure.is_some() {
            return;
        }
        entries.push(ParamEntry {
            name: name.clone(),
            shape: p.shape(),
        });
        let mut bytes = Vec::with_capacity(p.numel() * 4);
        for x in p.values_f32() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let path = blob_path(dir, &name);
        if let Err(e) = fs::write(&path, bytes) {
            failure = Some(Error::io(&path, e));
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));

    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        init_seed: model.init_seed,
        params: entries,
        provenance,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Load a checkpoint exactly as stored.
pub fn load_checkpoint<F: Scalar>(dir: impl AsRef<Path>) -> Result<UniversalModel<F>> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }

    let mut model = UniversalModel::<F>::new(manifest.config.clone(), manifest.init_seed)?;

    // Harvest the per-graph modules from the stored parameter names.
    let mut graph_dims: BTreeMap<String, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for entry in &manifest.params {
        if let Some(rest) = entry.name.strip_prefix("encoder.") {
            if let Some(gid) = rest.strip_suffix(".proj.w") {
                graph_dims.entry(gid.to_string()).or_default().0 = Some(entry.shape[0]);
            }
        } else if let Some(rest) = entry.name.strip_prefix("head.") {
            if let Some(gid) = rest.strip_suffix(".fc.w") {
                graph_dims.entry(gid.to_string()).or_default().1 = Some(entry.shape[1]);
            }
        }
    }
    for (gid, (aug_dim, classes)) in &graph_dims {
        let aug_dim = aug_dim
            .ok_or_else(|| Error::Checkpoint(format!("graph `{gid}` has no encoder blob")))?;
        let classes = classes
            .ok_or_else(|| Error::Checkpoint(format!("graph `{gid}` has no classifier blob")))?;
        model.register_graph(gid, aug_dim, classes)?;
    }

    // Overwrite every tensor from its blob.
    let mut expected: BTreeMap<String, Vec<usize>> = manifest
        .params
        .iter()
        .map(|e| (e.name.clone(), e.shape.clone()))
        .collect();
    let mut failure: Option<Error> = None;
    model.visit_mut("", &mut |name, p| {
        if failure.is_some() {
            return;
        }
        let Some(shape) = expected.remove(&name) else {
            failure = Some(Error::Checkpoint(format!(
                "model parameter `{name}` missing from checkpoint"
            )));
            return;
        };
        let path = blob_path(dir, &name);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                failure = Some(Error::io(&path, e));
                return;
            }
        };
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ok = match p {
            ParamRefMut::Mat(m) => {
                if shape == m.v.shape() && values.len() == m.v.len() {
                    for (slot, v) in m.v.iter_mut().zip(&values) {
                        *slot = F::from_f32(*v);
                    }
                    true
                } else {
                    false
                }
            }
            ParamRefMut::Vec(vec) => {
                if shape == vec.v.shape() && values.len() == vec.v.len() {
                    for (slot, v) in vec.v.iter_mut().zip(&values) {
                        *slot = F::from_f32(*v);
                    }
                    true
                } else {
                    false
                }
            }
        };
        if !ok {
            failure = Some(Error::Checkpoint(format!(
                "parameter `{name}` has shape {shape:?} in the checkpoint but a different shape in the model"
            )));
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some((name, _)) = expected.into_iter().next() {
        return Err(Error::Checkpoint(format!(
            "checkpoint parameter `{name}` has no place in the model"
        )));
    }
    Ok(model)
}

/// Make sure every listed graph is registered, initializing fresh per-graph
/// modules where the checkpoint had none. Returns the ids that were added.
/// Graphs registered in the model but absent from the list are kept and
/// logged.
pub fn align_with_graphs<F: Scalar>(
    model: &mut UniversalModel<F>,
    graphs: &[(String, usize, usize)], // (graph_id, aug_dim, num_classes)
) -> Result<Vec<String>> {
    let mut added = Vec::new();
    let wanted: Vec<&str> = graphs.iter().map(|(id, _, _)| id.as_str()).collect();
    for gid in model.graph_ids() {
        if !wanted.contains(&gid.as_str()) {
            log::warn!("checkpoint contains modules for `{gid}`, which is not in the family; ignoring them");
        }
    }
    for (gid, aug_dim, classes) in graphs {
        if !model.is_registered(gid) {
            log::info!("initializing fresh modules for graph `{gid}`");
            model.register_graph(gid, *aug_dim, *classes)?;
            added.push(gid.clone());
        }
    }
    Ok(added)
}
