//! Flattened view over all regularizable parameters.
//!
//! The view covers every dense-layer weight exactly once, in layer order, and
//! no bias. Penalties, the proximal step, and the coherence rate all operate
//! on this vector, so its ordering is the canonical parameter ordering for
//! checkpoints too.

use crate::tensor::Tensor;

use super::network::{Network, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatSource {
    Params,
    Grads,
}

#[derive(Debug, Clone)]
struct Segment {
    layer_pos: usize,
    len: usize,
}

/// Index map from dense-layer weights to one flat vector of length `n`.
#[derive(Debug, Clone)]
pub struct FlatParamView {
    segments: Vec<Segment>,
    n: usize,
}

impl FlatParamView {
    pub fn new(net: &Network) -> Self {
        let mut segments = Vec::new();
        let mut n = 0;
        for (layer_pos, layer) in net.layers().iter().enumerate() {
            if let Some(dense) = layer.as_dense() {
                let len = dense.weights().len();
                segments.push(Segment { layer_pos, len });
                n += len;
            }
        }
        Self { segments, n }
    }

    /// Number of regularizable parameters.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Copy weights (or their gradients) into one flat vector, in view order.
    pub fn gather(&self, net: &Network, source: FlatSource) -> Tensor {
        let mut out = Vec::with_capacity(self.n);
        for seg in &self.segments {
            let dense = net.layers()[seg.layer_pos]
                .as_dense()
                .expect("flat view layer positions must be dense layers");
            let src = match source {
                FlatSource::Params => dense.weights().data(),
                FlatSource::Grads => dense.grad_weights().data(),
            };
            debug_assert_eq!(src.len(), seg.len);
            out.extend_from_slice(src);
        }
        Tensor::from_vec(vec![self.n], out).expect("view length bookkeeping")
    }

    /// Overwrite weights from a flat vector, in view order. Biases untouched.
    pub fn scatter(&self, net: &mut Network, values: &Tensor) -> Result<(), NnError> {
        if values.len() != self.n {
            return Err(NnError::FlatLength {
                expected: self.n,
                got: values.len(),
            });
        }
        let mut offset = 0;
        for seg in &self.segments {
            let dense = net.layers_mut()[seg.layer_pos]
                .as_dense_mut()
                .ok_or(NnError::ViewMismatch)?;
            if dense.weights().len() != seg.len {
                return Err(NnError::ViewMismatch);
            }
            dense
                .weights
                .data_mut()
                .copy_from_slice(&values.data()[offset..offset + seg.len]);
            offset += seg.len;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{init_params, Architecture};
    use crate::rng::Rng;
    use crate::tensor::abs_mean_slice;

    fn small_net() -> Network {
        let arch = Architecture::mlp(4, 3, 2, 5, 0.0);
        init_params(&arch, &Rng::new(77)).unwrap()
    }

    #[test]
    fn view_counts_weights_and_skips_biases() {
        let net = small_net();
        let view = FlatParamView::new(&net);
        // 4*3 + 3*3 + 3*5 weights; biases (3 + 3 + 5) excluded.
        assert_eq!(view.len(), 12 + 9 + 15);
    }

    #[test]
    fn gather_scatter_round_trip_is_bitwise() {
        let mut net = small_net();
        let view = FlatParamView::new(&net);
        let flat = view.gather(&net, FlatSource::Params);
        view.scatter(&mut net, &flat).unwrap();
        let again = view.gather(&net, FlatSource::Params);
        assert_eq!(flat, again);
    }

    #[test]
    fn scatter_zeros_leaves_biases_alone() {
        let mut net = small_net();
        // Give biases a recognizable value first.
        for layer in net.layers_mut() {
            if let Some(d) = layer.as_dense_mut() {
                d.bias.data_mut().fill(0.5);
            }
        }
        let view = FlatParamView::new(&net);
        let zeros = Tensor::zeros(vec![view.len()]);
        view.scatter(&mut net, &zeros).unwrap();
        for layer in net.layers() {
            if let Some(d) = layer.as_dense() {
                assert!(d.weights().data().iter().all(|&w| w == 0.0));
                assert!(d.bias().data().iter().all(|&b| b == 0.5));
            }
        }
    }

    #[test]
    fn scatter_rejects_wrong_length() {
        let mut net = small_net();
        let view = FlatParamView::new(&net);
        let too_short = Tensor::zeros(vec![view.len() - 1]);
        assert!(matches!(
            view.scatter(&mut net, &too_short),
            Err(NnError::FlatLength { .. })
        ));
    }

    #[test]
    fn flat_abs_mean_matches_count_weighted_layer_average() {
        let net = small_net();
        let view = FlatParamView::new(&net);
        let flat = view.gather(&net, FlatSource::Params);
        let direct = flat.abs_mean().unwrap();

        let mut weighted = 0.0;
        let mut count = 0.0;
        for layer in net.layers() {
            if let Some(d) = layer.as_dense() {
                let c = d.weights().len() as f64;
                weighted += abs_mean_slice(d.weights().data()) * c;
                count += c;
            }
        }
        assert!((direct - weighted / count).abs() < 1e-12);
    }
}
