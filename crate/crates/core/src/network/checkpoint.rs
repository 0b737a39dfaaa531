//! Checkpoint directory: `manifest.json` listing tensor names and shapes, plus
//! one raw little-endian f32 blob per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, NetworkConfig};
use crate::error::{Error, Result};
use crate::motiongraph::Projections;
use crate::numcore::Tensor2;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    network: NetworkConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    file: String,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, params: &ModelParams, cfg: &NetworkConfig) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (name, t) in params.named_tensors() {
        let file = format!("{name}.f32");
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name,
            rows: t.rows(),
            cols: t.cols(),
            file,
        });
    }
    let manifest = CheckpointManifest { network: *cfg, tensors };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelParams, NetworkConfig)> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        location: format!("line {}, column {}", e.line(), e.column()),
        detail: e.to_string(),
    })?;

    let mut loaded = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != 4 * entry.rows * entry.cols {
            return Err(Error::Parse {
                path,
                location: "byte 0".into(),
                detail: format!("{} bytes for a {}x{} tensor", bytes.len(), entry.rows, entry.cols),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        loaded.push((entry.name.as_str(), Tensor2::from_vec(entry.rows, entry.cols, data)?));
    }

    let mut take = |name: &str| -> Result<Tensor2> {
        let pos = loaded
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("checkpoint is missing tensor {name}")))?;
        Ok(loaded.swap_remove(pos).1)
    };
    let cfg = manifest.network;
    let params = ModelParams {
        embed_w: take("embed.weight")?,
        embed_b: take("embed.bias")?,
        cls_w: take("cls.weight")?,
        cls_b: take("cls.bias")?,
        gcn: (0..cfg.gcn_layers)
            .map(|i| take(&format!("gcn.{i}.weight")))
            .collect::<Result<_>>()?,
        mot_w: take("mot.weight")?,
        mot_b: take("mot.bias")?,
        projections: Projections {
            w1: take("proj.w1")?,
            w2: take("proj.w2")?,
        },
    };
    params.check_shapes(&cfg)?;
    Ok((params, cfg))
}
