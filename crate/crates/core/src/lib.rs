//! Training toolkit for studying strong L1/L2 regularization of feed-forward
//! networks under momentum SGD.
//!
//! Strong penalties can silently kill learning: the penalty gradient
//! dominates, weights shrink, and the backpropagated loss gradients shrink
//! multiplicatively with them until the model settles at chance accuracy.
//! This crate provides the pieces to reproduce and avoid that failure at desk
//! scale:
//!
//! - [`tensor`]: dense `f64` arrays with deterministic kernels, and seedable
//!   forkable randomness in [`rng`];
//! - [`nn`]: an MLP with explicit forward/backward passes and a flat view
//!   over regularizable weights (biases are never penalized);
//! - [`reg`]: L1/L2 penalties, the proximal soft-threshold, the gradient sign
//!   coherence rate, and gated schedules (constant, epoch-gated,
//!   coherence-gated);
//! - [`optim`]: momentum SGD composing loss gradients with additive L2 or
//!   proximal L1 regularization;
//! - [`data`]: synthetic classification tasks, IDX ingestion, deterministic
//!   batching;
//! - [`experiment`]: run orchestration, collapse detection, sparsity and
//!   compression accounting, and the lambda/depth sweep protocols.

pub mod data;
pub mod experiment;
pub mod nn;
pub mod optim;
pub mod reg;
pub mod rng;
pub mod tensor;

pub use rng::{Rng, RNG_ALGORITHM};
pub use tensor::{Tensor, TensorError};
