//! Checkpoint container: one safetensors file per trainable parameter group
//! plus `manifest.json`.
//!
//! Frozen groups are not stored; they are rebuilt from the recorded seed.
//! The manifest lists every group with its flag, tensor shapes and, for
//! stored groups, the file name and an FNV-1a digest of its bytes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use super::optim::OptimizerConfig;
use super::policy::{Trainability, TrainabilityPolicy};
use crate::backend::tiny::TinyConfig;
use crate::frame::fnv1a64;
use crate::fsutil::replace_dir_atomic;
use crate::params::{ParamGroup, ParamSet};
use crate::segmentation::SegmentationModel;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint does not fit the model: {0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub group: ParamGroup,
    pub trainability: Trainability,
    pub file: Option<String>,
    pub digest: Option<String>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub tiny: TinyConfig,
    pub optimizer: OptimizerConfig,
    pub groups: Vec<GroupEntry>,
}

/// What a checkpoint records besides the tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub tiny: TinyConfig,
    pub optimizer: OptimizerConfig,
}

fn encode_group(set: &ParamSet) -> Result<Vec<u8>, CheckpointError> {
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = set
        .iter()
        .map(|(name, t)| {
            let data = t.iter().flat_map(|v| v.to_le_bytes()).collect();
            (name.clone(), t.shape().to_vec(), data)
        })
        .collect();
    let views = bytes
        .iter()
        .map(|(name, shape, data)| {
            TensorView::new(Dtype::F64, shape.clone(), data)
                .map(|v| (name.as_str(), v))
                .map_err(|e| CheckpointError::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    safetensors::serialize(views, &None::<HashMap<String, String>>).map_err(|e| CheckpointError::Format(e.to_string()))
}

fn decode_group(bytes: &[u8]) -> Result<ParamSet, CheckpointError> {
    let st = SafeTensors::deserialize(bytes).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let mut set = ParamSet::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 {
            return Err(CheckpointError::Format(format!("tensor `{name}` is {:?}, expected F64", view.dtype())));
        }
        let values: Vec<f64> = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = ArrayD::from_shape_vec(IxDyn(view.shape()), values)
            .map_err(|e| CheckpointError::Format(format!("tensor `{name}`: {e}")))?;
        set.insert(name, t);
    }
    Ok(set)
}

fn tensor_entries(set: Option<&ParamSet>) -> Vec<TensorEntry> {
    set.map(|s| {
        s.iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect()
    })
    .unwrap_or_default()
}

/// Writes the trainable groups of `model` to `dir`, replacing any previous
/// checkpoint there as a whole.
pub fn save_checkpoint(
    dir: &Path,
    model: &SegmentationModel,
    policy: &TrainabilityPolicy,
    meta: &CheckpointMeta,
) -> Result<CheckpointManifest, CheckpointError> {
    let mut files = Vec::new();
    let mut groups = Vec::new();
    for (group, trainability) in policy.iter() {
        let set = model.group_params(group);
        let (file, digest) = match (trainability, set) {
            (Trainability::Trainable, Some(set)) => {
                let bytes = encode_group(set)?;
                let file = format!("{group}.safetensors");
                let digest = format!("{:016x}", fnv1a64(&bytes));
                files.push((file.clone(), bytes));
                (Some(file), Some(digest))
            }
            _ => (None, None),
        };
        groups.push(GroupEntry {
            group,
            trainability,
            file,
            digest,
            tensors: tensor_entries(set),
        });
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        seed: meta.seed,
        epochs: meta.epochs,
        steps: meta.steps,
        tiny: meta.tiny.clone(),
        optimizer: meta.optimizer.clone(),
        groups,
    };
    let manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    replace_dir_atomic(dir, |staging| {
        for (file, bytes) in &files {
            fs::write(staging.join(file), bytes)?;
        }
        fs::write(staging.join(MANIFEST_FILE), &manifest_json)?;
        Ok(())
    })
    .map_err(io_err(dir))?;
    Ok(manifest)
}

/// A checkpoint read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub groups: BTreeMap<ParamGroup, ParamSet>,
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, CheckpointError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: CheckpointManifest =
        serde_json::from_slice(&text).map_err(|e| CheckpointError::Format(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!(
            "format version {} is not {FORMAT_VERSION}",
            manifest.format_version
        )));
    }
    let mut groups = BTreeMap::new();
    for entry in &manifest.groups {
        let Some(file) = &entry.file else { continue };
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let digest = format!("{:016x}", fnv1a64(&bytes));
        if entry.digest.as_deref() != Some(digest.as_str()) {
            return Err(CheckpointError::Format(format!("{file}: digest mismatch")));
        }
        let set = decode_group(&bytes)?;
        let listed: Vec<TensorEntry> = tensor_entries(Some(&set));
        if listed != entry.tensors {
            return Err(CheckpointError::Format(format!("{file}: tensors differ from manifest")));
        }
        groups.insert(entry.group, set);
    }
    Ok(Checkpoint { manifest, groups })
}

/// Overwrites the model's stored groups with the checkpoint's, after
/// checking every tensor name and shape.
pub fn apply_checkpoint(model: &mut SegmentationModel, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    for (&group, stored) in &checkpoint.groups {
        let target = model
            .group_params(group)
            .ok_or_else(|| CheckpointError::Mismatch(format!("model has no `{group}` parameters")))?;
        if tensor_entries(Some(target)) != tensor_entries(Some(stored)) {
            return Err(CheckpointError::Mismatch(format!("`{group}` tensor names or shapes differ")));
        }
    }
    for (&group, stored) in &checkpoint.groups {
        *model.group_params_mut(group).expect("checked above") = stored.clone();
    }
    Ok(())
}
