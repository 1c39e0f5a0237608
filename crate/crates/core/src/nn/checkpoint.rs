//! Parameter checkpoints.
//!
//! A checkpoint is a JSON document with the architecture descriptor, the
//! weight vector in flat-view order, per-layer bias vectors, and the label of
//! the generator that produced the run. Layout is versioned by the `format`
//! field; see the repository README for the exact schema.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::flat::{FlatParamView, FlatSource};
use super::network::{Architecture, Network, NnError};
use crate::rng::RNG_ALGORITHM;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "strongreg-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    rng_algorithm: String,
    rng_label: String,
    arch: Architecture,
    /// Dense weights, concatenated in flat-view (layer) order.
    weights: Vec<f64>,
    /// One bias vector per dense layer, in layer order.
    biases: Vec<Vec<f64>>,
}

/// Write `net` to `path`. `rng_label` records which stream trained it.
pub fn save_checkpoint(net: &Network, rng_label: &str, path: &Path) -> Result<(), NnError> {
    let view = FlatParamView::new(net);
    let weights = view.gather(net, FlatSource::Params).into_data();
    let biases = net
        .dense_layers()
        .map(|d| d.bias().data().to_vec())
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        rng_label: rng_label.to_string(),
        arch: net.arch().clone(),
        weights,
        biases,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| NnError::Format(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

/// Load a checkpoint, returning the network and the stored rng label.
///
/// Restores parameters only; optimizer state and dropout streams are not part
/// of a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<(Network, String), NnError> {
    let raw = fs::read_to_string(path)?;
    let file: CheckpointFile =
        serde_json::from_str(&raw).map_err(|e| NnError::Format(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(NnError::Format(format!(
            "unsupported checkpoint format {:?}",
            file.format
        )));
    }
    let mut net = Network::zeroed(&file.arch)?;
    let view = FlatParamView::new(&net);
    let flat = Tensor::from_vec(vec![file.weights.len()], file.weights)
        .map_err(|e| NnError::Format(e.to_string()))?;
    view.scatter(&mut net, &flat)?;

    let dense_count = net.dense_layers().count();
    if file.biases.len() != dense_count {
        return Err(NnError::Format(format!(
            "checkpoint has {} bias vectors, network has {} dense layers",
            file.biases.len(),
            dense_count
        )));
    }
    for (dense, bias) in net.dense_layers_mut().zip(&file.biases) {
        if dense.bias().len() != bias.len() {
            return Err(NnError::Format(format!(
                "bias length {} does not match layer width {}",
                bias.len(),
                dense.bias().len()
            )));
        }
        dense.bias.data_mut().copy_from_slice(bias);
    }
    Ok((net, file.rng_label))
}
