//! Feed-forward network with explicit forward/backward passes and a fused
//! softmax cross-entropy head.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::{abs_mean_slice, Tensor, TensorError};

use super::layers::{DenseLayer, DropoutLayer, Layer, Mode, ReluLayer};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input width {got} does not match network input width {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("batch has {rows} rows but {labels} labels")]
    BatchMismatch { rows: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("flat vector length {got} does not match view length {expected}")]
    FlatLength { expected: usize, got: usize },
    #[error("flat view does not match this network's layer layout")]
    ViewMismatch,
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Shape of an MLP: input width, hidden widths, class count, and the drop
/// probability applied after each hidden ReLU (`0` disables dropout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout: f64,
}

impl Architecture {
    /// Uniform-width MLP with `depth` hidden layers.
    pub fn mlp(input_dim: usize, hidden_width: usize, depth: usize, classes: usize, dropout: f64) -> Self {
        Self {
            input_dim,
            hidden: vec![hidden_width; depth],
            classes,
            dropout,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::Architecture("input_dim must be positive".into()));
        }
        if self.classes < 2 {
            return Err(NnError::Architecture("need at least 2 classes".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(NnError::Architecture("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Architecture(format!(
                "dropout {} not in [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Ordered layer stack ending in a softmax cross-entropy head.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    arch: Architecture,
}

/// He-style initialization: weights from a zero-mean normal with standard
/// deviation `sqrt(2 / fan_in)` (all hidden activations are ReLU), biases
/// exactly zero. Dropout layers get their own labeled substreams.
pub fn init_params(arch: &Architecture, rng: &Rng) -> Result<Network, NnError> {
    arch.validate()?;
    let mut weight_rng = rng.fork("weights");
    let mut layers = Vec::new();
    let mut fan_in = arch.input_dim;
    for (i, &width) in arch.hidden.iter().enumerate() {
        layers.push(Layer::Dense(dense_he(&mut weight_rng, width, fan_in)));
        layers.push(Layer::Relu(ReluLayer::default()));
        if arch.dropout > 0.0 {
            let dropout_rng = rng.fork(&format!("dropout{i}"));
            layers.push(Layer::Dropout(DropoutLayer::new(arch.dropout, dropout_rng)));
        }
        fan_in = width;
    }
    layers.push(Layer::Dense(dense_he(&mut weight_rng, arch.classes, fan_in)));
    Ok(Network {
        layers,
        arch: arch.clone(),
    })
}

fn dense_he(rng: &mut Rng, out: usize, fan_in: usize) -> DenseLayer {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut weights = Tensor::zeros(vec![out, fan_in]);
    for w in weights.data_mut() {
        *w = std * rng.normal();
    }
    DenseLayer::new(weights, Tensor::zeros(vec![out]))
}

impl Network {
    /// Build a network with all-zero parameters (used by checkpoint loading).
    pub fn zeroed(arch: &Architecture) -> Result<Self, NnError> {
        init_params(arch, &Rng::new(0)).map(|mut net| {
            for layer in &mut net.layers {
                if let Some(d) = layer.as_dense_mut() {
                    d.weights.data_mut().fill(0.0);
                }
            }
            net
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.layers.iter().filter_map(|l| l.as_dense())
    }

    pub fn dense_layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.layers.iter_mut().filter_map(|l| l.as_dense_mut())
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    /// Run the stack on a `[batch x input]` tensor, producing logits
    /// `[batch x classes]`. Training mode populates layer caches.
    pub fn forward(&mut self, batch_x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        if batch_x.cols() != self.arch.input_dim {
            return Err(NnError::InputWidth {
                expected: self.arch.input_dim,
                got: batch_x.cols(),
            });
        }
        let mut cur = batch_x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(cur, mode)?;
        }
        Ok(cur)
    }

    /// Mean cross-entropy over the batch (regularization penalty excluded)
    /// plus a full backward pass populating every `dW`, `db`.
    pub fn loss_and_grad(&mut self, batch_x: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
        let logits = self.forward(batch_x, Mode::Train)?;
        let (loss, delta) = softmax_cross_entropy(&logits, labels, self.arch.classes)?;
        let mut delta = delta;
        for layer in self.layers.iter_mut().rev() {
            delta = layer.backward(delta)?;
        }
        Ok(loss)
    }

    /// Eval-mode loss and accuracy; leaves caches and gradients untouched.
    pub fn evaluate(&mut self, batch_x: &Tensor, labels: &[usize]) -> Result<(f64, f64), NnError> {
        let logits = self.forward(batch_x, Mode::Eval)?;
        let (loss, _) = softmax_cross_entropy(&logits, labels, self.arch.classes)?;
        let mut correct = 0usize;
        for (row, &label) in labels.iter().enumerate() {
            if argmax(logits.row(row)) == label {
                correct += 1;
            }
        }
        Ok((loss, correct as f64 / labels.len() as f64))
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Log-sum-exp stabilized softmax cross-entropy. Returns the batch-mean loss
/// and the logits gradient `(softmax - onehot) / batch`.
fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    classes: usize,
) -> Result<(f64, Tensor), NnError> {
    let batch = logits.rows();
    if batch != labels.len() {
        return Err(NnError::BatchMismatch {
            rows: batch,
            labels: labels.len(),
        });
    }
    for &label in labels {
        if label >= classes {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
    }
    let inv_batch = 1.0 / batch as f64;
    let mut delta = Tensor::zeros(vec![batch, classes]);
    let mut loss = 0.0;
    for row in 0..batch {
        let z = logits.row(row);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in z {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        loss += lse - z[labels[row]];
        let drow = &mut delta.data_mut()[row * classes..(row + 1) * classes];
        for (j, d) in drow.iter_mut().enumerate() {
            let p = (z[j] - lse).exp();
            let indicator = if j == labels[row] { 1.0 } else { 0.0 };
            *d = (p - indicator) * inv_batch;
        }
    }
    Ok((loss * inv_batch, delta))
}

/// Per-layer and aggregate mean-absolute statistics over dense weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub weight_count: usize,
    pub avg_abs_w: f64,
    pub avg_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStatsReport {
    pub per_layer: Vec<LayerStats>,
    pub global: LayerStats,
}

/// Mean |w| and |dW| per dense layer plus the global aggregate over all
/// regularizable weights (biases excluded).
pub fn layer_stats(net: &Network) -> LayerStatsReport {
    let mut per_layer = Vec::new();
    let mut sum_abs_w = 0.0;
    let mut sum_abs_g = 0.0;
    let mut count = 0usize;
    for dense in net.dense_layers() {
        let c = dense.weights().len();
        let aw = abs_mean_slice(dense.weights().data());
        let ag = abs_mean_slice(dense.grad_weights().data());
        per_layer.push(LayerStats {
            weight_count: c,
            avg_abs_w: aw,
            avg_abs_grad: ag,
        });
        sum_abs_w += dense.weights().data().iter().map(|w| w.abs()).sum::<f64>();
        sum_abs_g += dense
            .grad_weights()
            .data()
            .iter()
            .map(|g| g.abs())
            .sum::<f64>();
        count += c;
    }
    let global = LayerStats {
        weight_count: count,
        avg_abs_w: sum_abs_w / count as f64,
        avg_abs_grad: sum_abs_g / count as f64,
    };
    LayerStatsReport { per_layer, global }
}
