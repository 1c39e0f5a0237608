//! Feed-forward networks: dense + ReLU + dropout layers, a softmax
//! cross-entropy head, explicit backward passes, and the flattened view over
//! regularizable parameters.

mod checkpoint;
mod flat;
mod layers;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use flat::{FlatParamView, FlatSource};
pub use layers::{DenseLayer, DropoutLayer, Layer, Mode, ReluLayer};
pub use network::{
    init_params, layer_stats, Architecture, LayerStats, LayerStatsReport, Network, NnError,
};
