//! Layer implementations: dense affine, ReLU, inverted dropout.

use crate::rng::Rng;
use crate::tensor::{Tensor, TensorError};

/// Forward-pass mode. Training populates the caches backward needs and
/// samples fresh dropout masks; evaluation does neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense affine layer `z = x W^T + b` with `W: [out x in]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub(crate) weights: Tensor,
    pub(crate) bias: Tensor,
    pub(crate) grad_weights: Tensor,
    pub(crate) grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor) -> Self {
        let grad_weights = Tensor::zeros(weights.shape().to_vec());
        let grad_bias = Tensor::zeros(bias.shape().to_vec());
        Self {
            weights,
            bias,
            grad_weights,
            grad_bias,
            cached_input: None,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn grad_weights(&self) -> &Tensor {
        &self.grad_weights
    }

    pub fn grad_bias(&self) -> &Tensor {
        &self.grad_bias
    }

    fn forward(&mut self, x: Tensor, mode: Mode) -> Result<Tensor, TensorError> {
        let mut z = x.matmul_nt(&self.weights)?;
        let out = self.out_dim();
        for row in 0..z.rows() {
            let zr = &mut z.data_mut()[row * out..(row + 1) * out];
            for (v, b) in zr.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        if mode == Mode::Train {
            self.cached_input = Some(x);
        }
        Ok(z)
    }

    fn backward(&mut self, delta: Tensor) -> Result<Tensor, TensorError> {
        let input = self
            .cached_input
            .as_ref()
            .expect("dense backward requires a train-mode forward pass");
        self.grad_weights = delta.matmul_tn(input)?;
        // Column sums of delta, rows accumulated in order.
        let out = self.out_dim();
        let mut db = vec![0.0; out];
        for row in 0..delta.rows() {
            for (d, &v) in db.iter_mut().zip(delta.row(row)) {
                *d += v;
            }
        }
        self.grad_bias = Tensor::from_vec(vec![out], db)?;
        delta.matmul(&self.weights)
    }
}

/// ReLU activation; the backward pass is zero exactly where the cached
/// pre-activation is `<= 0`.
#[derive(Debug, Clone, Default)]
pub struct ReluLayer {
    cached_z: Option<Tensor>,
}

impl ReluLayer {
    fn forward(&mut self, z: Tensor, mode: Mode) -> Tensor {
        let out = z.ew_map(|v| if v > 0.0 { v } else { 0.0 });
        if mode == Mode::Train {
            self.cached_z = Some(z);
        }
        out
    }

    fn backward(&mut self, delta: Tensor) -> Result<Tensor, TensorError> {
        let z = self
            .cached_z
            .as_ref()
            .expect("relu backward requires a train-mode forward pass");
        delta.ew_zip(z, |d, zv| if zv > 0.0 { d } else { 0.0 })
    }
}

/// Inverted dropout: in training each entry is kept with probability `1 - p`
/// and scaled by `1 / (1 - p)`; in evaluation the layer is the identity.
///
/// Masks are drawn from the layer's own substream, so other consumers of
/// randomness cannot perturb them.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    pub(crate) p: f64,
    rng: Rng,
    cached_mask: Option<Tensor>,
}

impl DropoutLayer {
    pub fn new(p: f64, rng: Rng) -> Self {
        assert!((0.0..1.0).contains(&p), "drop probability {p} not in [0,1)");
        Self {
            p,
            rng,
            cached_mask: None,
        }
    }

    fn forward(&mut self, x: Tensor, mode: Mode) -> Result<Tensor, TensorError> {
        if mode == Mode::Eval {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - self.p);
        let mut mask = Tensor::zeros(x.shape().to_vec());
        for v in mask.data_mut() {
            *v = if self.rng.next_f64() < self.p { 0.0 } else { scale };
        }
        let out = x.ew_zip(&mask, |a, m| a * m)?;
        self.cached_mask = Some(mask);
        Ok(out)
    }

    fn backward(&mut self, delta: Tensor) -> Result<Tensor, TensorError> {
        let mask = self
            .cached_mask
            .as_ref()
            .expect("dropout backward requires a train-mode forward pass");
        delta.ew_zip(mask, |d, m| d * m)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Relu(ReluLayer),
    Dropout(DropoutLayer),
}

impl Layer {
    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Result<Tensor, TensorError> {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Relu(l) => Ok(l.forward(x, mode)),
            Layer::Dropout(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, delta: Tensor) -> Result<Tensor, TensorError> {
        match self {
            Layer::Dense(l) => l.backward(delta),
            Layer::Relu(l) => l.backward(delta),
            Layer::Dropout(l) => l.backward(delta),
        }
    }

    pub fn as_dense(&self) -> Option<&DenseLayer> {
        match self {
            Layer::Dense(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_dense_mut(&mut self) -> Option<&mut DenseLayer> {
        match self {
            Layer::Dense(l) => Some(l),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_matches_heaviside_factorization() {
        let z = Tensor::from_vec(vec![5], vec![-2.0, -0.0, 0.0, 0.5, 3.0]).unwrap();
        let mut layer = ReluLayer::default();
        let out = layer.forward(z.clone(), Mode::Eval);
        let theta = z.ew_map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let factored = z.ew_zip(&theta, |a, t| a * t).unwrap();
        assert_eq!(out, factored);
    }

    #[test]
    fn relu_backward_zero_exactly_where_z_nonpositive() {
        let z = Tensor::from_vec(vec![4], vec![-1.0, 0.0, 1e-300, 2.0]).unwrap();
        let mut layer = ReluLayer::default();
        layer.forward(z, Mode::Train);
        let delta = Tensor::filled(vec![4], 7.0);
        let back = layer.backward(delta).unwrap();
        assert_eq!(back.data(), &[0.0, 0.0, 7.0, 7.0]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut layer = DropoutLayer::new(0.5, Rng::new(1));
        let x = Tensor::from_vec(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let out = layer.forward(x.clone(), Mode::Eval).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn dropout_train_mask_mean_near_one() {
        let mut layer = DropoutLayer::new(0.5, Rng::new(2));
        let n = 10_000;
        let x = Tensor::filled(vec![n], 1.0);
        let out = layer.forward(x, Mode::Train).unwrap();
        let mean = out.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.05, "mask mean {mean}");
        // Entries are exactly 0 or the inverted-keep scale.
        for &v in out.data() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-15);
        }
    }
}
