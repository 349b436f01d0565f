//! Checkpoint directory layout:
//!
//! - `params.ften`: FTEN tensors back to back, per layer (trunk first, then
//!   heads) the weight `[k, k, in, out]` followed by the bias `[out]`.
//! - `manifest.json`: layer names, shapes and dilations, plus the seed and
//!   training configuration that produced the weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConvLayer, NetworkParams, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{self, Tensor};

pub const PARAMS_FILE: &str = "params.ften";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "wordfence-checkpoint-1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    pub weight_shape: Vec<usize>,
    pub bias_shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub tensors: String,
    pub trunk: Vec<LayerEntry>,
    pub heads: Vec<LayerEntry>,
    pub seed: u64,
    pub config: TrainConfig,
}

fn entry(name: String, l: &ConvLayer) -> LayerEntry {
    let k = l.kernel_size;
    LayerEntry {
        name,
        kernel_size: k,
        in_channels: l.in_channels,
        out_channels: l.out_channels,
        dilation: l.dilation,
        weight_shape: vec![k, k, l.in_channels, l.out_channels],
        bias_shape: vec![l.out_channels],
    }
}

pub fn save_checkpoint(dir: &Path, params: &NetworkParams, config: &TrainConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        tensors: PARAMS_FILE.into(),
        trunk: params
            .trunk
            .iter()
            .enumerate()
            .map(|(i, l)| entry(format!("trunk{i}"), l))
            .collect(),
        heads: params
            .heads
            .iter()
            .enumerate()
            .map(|(i, l)| entry(format!("head{i}"), l))
            .collect(),
        seed: config.seed,
        config: config.clone(),
    };
    let mut tensors = Vec::new();
    for l in params.layers() {
        let k = l.kernel_size as u32;
        tensors.push(Tensor::from_f64(
            vec![k, k, l.in_channels as u32, l.out_channels as u32],
            &l.weight,
        ));
        tensors.push(Tensor::from_f64(vec![l.out_channels as u32], &l.bias));
    }
    io::write_tensors(&dir.join(PARAMS_FILE), &tensors)?;
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(NetworkParams, CheckpointManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: CheckpointManifest = io::read_json(&manifest_path)?;
    if manifest.format != FORMAT {
        return Err(Error::format(
            &manifest_path,
            format!("unknown checkpoint format {:?}", manifest.format),
        ));
    }
    let tensor_path = dir.join(&manifest.tensors);
    let tensors = io::read_tensors(&tensor_path)?;
    let entries: Vec<_> = manifest.trunk.iter().chain(&manifest.heads).collect();
    if tensors.len() != 2 * entries.len() {
        return Err(Error::format(
            &tensor_path,
            format!("expected {} tensors, found {}", 2 * entries.len(), tensors.len()),
        ));
    }
    let mut layers = Vec::with_capacity(entries.len());
    for (e, pair) in entries.iter().zip(tensors.chunks_exact(2)) {
        let dims = |t: &Tensor| t.dims.iter().map(|&d| d as usize).collect::<Vec<_>>();
        if dims(&pair[0]) != e.weight_shape || dims(&pair[1]) != e.bias_shape {
            return Err(Error::format(
                &tensor_path,
                format!("tensor shapes for layer {} disagree with the manifest", e.name),
            ));
        }
        let layer = ConvLayer {
            kernel_size: e.kernel_size,
            in_channels: e.in_channels,
            out_channels: e.out_channels,
            dilation: e.dilation,
            weight: pair[0].to_f64(),
            bias: pair[1].to_f64(),
        };
        layer
            .validate()
            .map_err(|err| Error::format(&manifest_path, format!("layer {}: {err}", e.name)))?;
        if layer.weight.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
            return Err(Error::format(&tensor_path, format!("non-finite weights in {}", e.name)));
        }
        layers.push(layer);
    }
    let heads = layers.split_off(manifest.trunk.len());
    let params = NetworkParams { trunk: layers, heads };
    params
        .validate()
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok((params, manifest))
}
