//! Momentum SGD composed with gated regularization.
//!
//! One train step runs forward/backward, decides the effective penalty
//! strength for this step (constant, epoch gate, or coherence gate), and then
//! updates parameters. L2 enters the gradient before the velocity update
//! (coupled decay); L1 is applied as a proximal soft-threshold after the
//! momentum step, so the velocity carries loss information only. Biases are
//! updated by momentum like everything else but are never penalized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{batches, Dataset};
use crate::nn::{layer_stats, FlatParamView, FlatSource, Network, NnError};
use crate::reg::{
    coherence_rate, effective_lambda, penalty_grad, prox_step, GateMode, RegError, RegKind,
    RegSchedule,
};
use crate::rng::Rng;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Reg(#[from] RegError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Momentum SGD settings: initial rate, momentum coefficient, and the
/// epoch period after which the rate halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub initial_lr: f64,
    pub momentum: f64,
    pub lr_halving_period: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.05,
            momentum: 0.9,
            lr_halving_period: 30,
        }
    }
}

/// Learning rate at a (zero-based) epoch: halves every `lr_halving_period`.
pub fn lr_at(config: &OptimizerConfig, epoch: usize) -> f64 {
    config.initial_lr * 0.5f64.powi((epoch / config.lr_halving_period) as i32)
}

#[derive(Debug, Clone)]
struct Velocity {
    weights: Tensor,
    bias: Tensor,
}

/// Velocity buffers mirroring every dense layer, plus step/epoch counters.
#[derive(Debug, Clone)]
pub struct OptimState {
    velocities: Vec<Velocity>,
    pub step: u64,
    pub epoch: usize,
}

impl OptimState {
    pub fn new(net: &Network) -> Self {
        let velocities = net
            .dense_layers()
            .map(|d| Velocity {
                weights: Tensor::zeros(d.weights().shape().to_vec()),
                bias: Tensor::zeros(d.bias().shape().to_vec()),
            })
            .collect();
        Self {
            velocities,
            step: 0,
            epoch: 0,
        }
    }
}

/// Per-step metrics, all computed from pre-update gradients.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    /// Batch-mean cross-entropy, penalty excluded.
    pub loss: f64,
    /// Mean |dL/dw| over all regularizable weights.
    pub avg_abs_grad: f64,
    /// Same statistic per dense layer.
    pub per_layer_avg_abs_grad: Vec<f64>,
    /// Sign coherence rate; computed whenever the schedule has `lambda > 0`.
    pub pi: Option<f64>,
    /// The strength actually applied this step (0 or `lambda`).
    pub effective_lambda: f64,
    /// `avg|dL| / (avg|dL| + lambda_eff * avg|dOmega|)`; 1 when ungated.
    pub grad_fraction: f64,
}

/// One minibatch update following the configured schedule. Returns metrics
/// computed from this step's gradients before any parameter changed.
pub fn train_step(
    net: &mut Network,
    view: &FlatParamView,
    batch_x: &Tensor,
    labels: &[usize],
    state: &mut OptimState,
    config: &OptimizerConfig,
    sched: &RegSchedule,
) -> Result<StepMetrics, OptimError> {
    let loss = net.loss_and_grad(batch_x, labels)?;
    let stats = layer_stats(net);

    // Coherence is measured on raw minibatch gradients against the
    // lambda-scaled penalty subgradient, before any momentum enters.
    let (pi, penalty_abs_mean) = if sched.lambda > 0.0 {
        let g_flat = view.gather(net, FlatSource::Grads);
        let w_flat = view.gather(net, FlatSource::Params);
        let pen = penalty_grad(&w_flat, sched.kind);
        let scaled = pen.ew_map(|p| sched.lambda * p);
        let report = coherence_rate(&g_flat, &scaled)?;
        (Some(report.pi), pen.abs_mean().unwrap_or(0.0))
    } else {
        (None, 0.0)
    };

    let lambda_eff = if sched.lambda > 0.0 {
        effective_lambda(sched, state.epoch, pi)?
    } else {
        0.0
    };

    let grad_fraction = if lambda_eff == 0.0 {
        1.0
    } else {
        let g = stats.global.avg_abs_grad;
        let denom = g + lambda_eff * penalty_abs_mean;
        if denom == 0.0 {
            1.0
        } else {
            g / denom
        }
    };

    let lr = lr_at(config, state.epoch);
    apply_update(net, view, state, config.momentum, lr, sched.kind, lambda_eff)?;
    state.step += 1;

    Ok(StepMetrics {
        loss,
        avg_abs_grad: stats.global.avg_abs_grad,
        per_layer_avg_abs_grad: stats.per_layer.iter().map(|l| l.avg_abs_grad).collect(),
        pi,
        effective_lambda: lambda_eff,
        grad_fraction,
    })
}

/// The parameter update given already-populated gradients: momentum step,
/// with L2 added to weight gradients beforehand and L1 applied as a prox
/// afterwards. Exposed within the crate so tests can drive it with surgically
/// modified gradients.
pub(crate) fn apply_update(
    net: &mut Network,
    view: &FlatParamView,
    state: &mut OptimState,
    beta: f64,
    lr: f64,
    kind: RegKind,
    lambda_eff: f64,
) -> Result<(), OptimError> {
    let add_l2 = kind == RegKind::L2 && lambda_eff > 0.0;
    for (dense, vel) in net.dense_layers_mut().zip(&mut state.velocities) {
        let two_lambda = 2.0 * lambda_eff;
        for ((w, v), g) in dense
            .weights
            .data_mut()
            .iter_mut()
            .zip(vel.weights.data_mut())
            .zip(dense.grad_weights.data())
        {
            let g_total = if add_l2 { g + two_lambda * *w } else { *g };
            *v = beta * *v - lr * g_total;
            *w += *v;
        }
        for ((b, v), g) in dense
            .bias
            .data_mut()
            .iter_mut()
            .zip(vel.bias.data_mut())
            .zip(dense.grad_bias.data())
        {
            *v = beta * *v - lr * *g;
            *b += *v;
        }
    }
    if kind == RegKind::L1 && lambda_eff > 0.0 {
        let flat = view.gather(net, FlatSource::Params);
        let shrunk = prox_step(&flat, lr * lambda_eff)?;
        view.scatter(net, &shrunk)?;
    }
    Ok(())
}

/// Step metrics averaged over one epoch.
#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub mean_loss: f64,
    pub mean_avg_abs_grad: f64,
    pub per_layer_mean_avg_abs_grad: Vec<f64>,
    /// Mean over steps where a coherence rate was computed.
    pub mean_pi: Option<f64>,
    pub mean_grad_fraction: f64,
    pub mean_effective_lambda: f64,
    pub steps: usize,
}

/// Run one full pass over the dataset in shuffled batches. The shuffle seed
/// is forked from `run_rng` by epoch label, so epoch order is reproducible no
/// matter what else draws from the run stream. Advances the epoch counter.
pub fn run_epoch(
    net: &mut Network,
    view: &FlatParamView,
    dataset: &Dataset,
    state: &mut OptimState,
    config: &OptimizerConfig,
    sched: &RegSchedule,
    batch_size: usize,
    run_rng: &Rng,
) -> Result<EpochMetrics, OptimError> {
    let epoch_seed = run_rng
        .fork(&format!("shuffle-epoch{}", state.epoch))
        .next_u64();
    let mut steps = Vec::new();
    for (x, labels) in batches(dataset, batch_size, epoch_seed) {
        steps.push(train_step(net, view, &x, &labels, state, config, sched)?);
    }
    state.epoch += 1;

    let n = steps.len() as f64;
    let layer_count = steps[0].per_layer_avg_abs_grad.len();
    let mut per_layer = vec![0.0; layer_count];
    for s in &steps {
        for (acc, v) in per_layer.iter_mut().zip(&s.per_layer_avg_abs_grad) {
            *acc += v / n;
        }
    }
    let pis: Vec<f64> = steps.iter().filter_map(|s| s.pi).collect();
    let mean_pi = if pis.is_empty() {
        None
    } else {
        Some(pis.iter().sum::<f64>() / pis.len() as f64)
    };
    Ok(EpochMetrics {
        mean_loss: steps.iter().map(|s| s.loss).sum::<f64>() / n,
        mean_avg_abs_grad: steps.iter().map(|s| s.avg_abs_grad).sum::<f64>() / n,
        per_layer_mean_avg_abs_grad: per_layer,
        mean_pi,
        mean_grad_fraction: steps.iter().map(|s| s.grad_fraction).sum::<f64>() / n,
        mean_effective_lambda: steps.iter().map(|s| s.effective_lambda).sum::<f64>() / n,
        steps: steps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind, SyntheticSpec};
    use crate::nn::{init_params, Architecture, Mode};

    #[test]
    fn lr_schedule_halves_every_period() {
        let cfg = OptimizerConfig::default();
        assert_eq!(lr_at(&cfg, 0), 0.05);
        assert_eq!(lr_at(&cfg, 29), 0.05);
        assert_eq!(lr_at(&cfg, 30), 0.025);
        assert_eq!(lr_at(&cfg, 60), 0.0125);
    }

    fn two_class_head() -> (Network, FlatParamView, OptimState) {
        let arch = Architecture {
            input_dim: 1,
            hidden: vec![],
            classes: 2,
            dropout: 0.0,
        };
        let mut net = Network::zeroed(&arch).unwrap();
        net.layers_mut()[0]
            .as_dense_mut()
            .unwrap()
            .weights
            .data_mut()
            .copy_from_slice(&[0.4, -0.2]);
        let view = FlatParamView::new(&net);
        let state = OptimState::new(&net);
        (net, view, state)
    }

    #[test]
    fn plain_sgd_matches_hand_stepped_softmax_model() {
        // lambda = 0, beta = 0: w <- w - alpha * dL/dw, with the gradient of
        // a two-class softmax head computed in closed form.
        let (mut net, view, mut state) = two_class_head();
        let cfg = OptimizerConfig {
            initial_lr: 0.1,
            momentum: 0.0,
            lr_halving_period: 30,
        };
        let sched = RegSchedule::none();
        let x = Tensor::matrix(1, 1, vec![1.0]).unwrap();

        let (mut w0, mut w1) = (0.4f64, -0.2f64);
        for _ in 0..5 {
            let p0 = w0.exp() / (w0.exp() + w1.exp());
            let expect0 = w0 - 0.1 * (p0 - 1.0);
            let expect1 = w1 - 0.1 * (1.0 - p0);
            train_step(&mut net, &view, &x, &[0], &mut state, &cfg, &sched).unwrap();
            let w = net.layers()[0].as_dense().unwrap().weights().data();
            assert!((w[0] - expect0).abs() < 1e-12);
            assert!((w[1] - expect1).abs() < 1e-12);
            w0 = w[0];
            w1 = w[1];
        }
        assert_eq!(state.step, 5);
    }

    #[test]
    fn l2_step_matches_hand_computation_on_scalar_weight() {
        // w = 1, g = 0, alpha = 0.1, lambda = 0.05, beta = 0:
        // w' = 1 - 0.1 * (0.05 * 2 * 1) = 0.99.
        let (mut net, view, mut state) = two_class_head();
        {
            let dense = net.layers_mut()[0].as_dense_mut().unwrap();
            dense.weights.data_mut().copy_from_slice(&[1.0, 0.0]);
        }
        apply_update(&mut net, &view, &mut state, 0.0, 0.1, RegKind::L2, 0.05).unwrap();
        let w = net.layers()[0].as_dense().unwrap().weights().data();
        assert!((w[0] - 0.99).abs() < 1e-15, "{}", w[0]);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn saturating_l1_threshold_zeroes_every_weight() {
        let arch = Architecture::mlp(3, 4, 2, 3, 0.0);
        let mut net = init_params(&arch, &Rng::new(8)).unwrap();
        let view = FlatParamView::new(&net);
        let mut state = OptimState::new(&net);
        let cfg = OptimizerConfig {
            initial_lr: 1.0,
            momentum: 0.0,
            lr_halving_period: 30,
        };
        let sched = RegSchedule::constant(RegKind::L1, 1e6);
        let x = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.5]).unwrap();
        train_step(&mut net, &view, &x, &[0, 1], &mut state, &cfg, &sched).unwrap();
        let flat = view.gather(&net, FlatSource::Params);
        assert!(flat.data().iter().all(|&w| w == 0.0));
        // Biases are outside the prox and may be nonzero.
    }

    #[test]
    fn zero_effective_lambda_is_bitwise_plain_momentum() {
        let arch = Architecture::mlp(6, 12, 2, 4, 0.0);
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters,
            classes: 4,
            dim: 6,
            train_per_class: 12,
            test_per_class: 4,
            noise: 0.8,
            seed: 40,
        };
        let (train, _) = gen_synthetic(&spec).unwrap();
        let cfg = OptimizerConfig::default();

        // EpochGate with gamma beyond the horizon never fires; the whole run
        // must be bit-identical to the unregularized one.
        let run = |sched: RegSchedule| -> Vec<f64> {
            let mut net = init_params(&arch, &Rng::new(4)).unwrap();
            let view = FlatParamView::new(&net);
            let mut state = OptimState::new(&net);
            let rng = Rng::new(4);
            for _ in 0..3 {
                run_epoch(&mut net, &view, &train, &mut state, &cfg, &sched, 16, &rng).unwrap();
            }
            view.gather(&net, FlatSource::Params).into_data()
        };
        let gated = run(RegSchedule::epoch_gated(RegKind::L2, 0.25, 100));
        let plain = run(RegSchedule::none());
        assert_eq!(gated, plain);
    }

    #[test]
    fn l1_prox_never_grows_any_weight() {
        let arch = Architecture::mlp(5, 8, 2, 3, 0.0);
        let mut net = init_params(&arch, &Rng::new(31)).unwrap();
        let view = FlatParamView::new(&net);
        let mut state = OptimState::new(&net);
        let cfg = OptimizerConfig::default();
        let sched = RegSchedule::constant(RegKind::L1, 1e-3);
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters,
            classes: 3,
            dim: 5,
            train_per_class: 10,
            test_per_class: 2,
            noise: 0.5,
            seed: 9,
        };
        let (train, _) = gen_synthetic(&spec).unwrap();
        let rng = Rng::new(31);
        for _ in 0..3 {
            let epoch_seed = rng
                .fork(&format!("shuffle-epoch{}", state.epoch))
                .next_u64();
            for (x, labels) in batches(&train, 8, epoch_seed) {
                // Reproduce the momentum-only part of the step, then check
                // the prox only ever contracts.
                net.loss_and_grad(&x, &labels).unwrap();
                apply_update(&mut net, &view, &mut state, cfg.momentum, 0.05, RegKind::L2, 0.0)
                    .unwrap();
                let before = view.gather(&net, FlatSource::Params);
                let shrunk = prox_step(&before, 0.05 * sched.lambda).unwrap();
                for (b, a) in before.data().iter().zip(shrunk.data()) {
                    assert!(a.abs() <= b.abs());
                }
                view.scatter(&mut net, &shrunk).unwrap();
            }
            state.epoch += 1;
        }
    }

    #[test]
    fn biases_are_never_touched_by_penalties() {
        // Frozen-weight probe: zero out weight gradients so only the penalty
        // could move anything; bias trajectories must match between
        // lambda = 0 and lambda > 0, and the prox must leave biases alone.
        let arch = Architecture::mlp(4, 6, 1, 3, 0.0);
        let x = Tensor::matrix(3, 4, vec![0.2; 12]).unwrap();
        let labels = [0, 1, 2];

        let run = |kind: RegKind, lambda: f64| -> (Vec<f64>, Vec<f64>) {
            let mut net = init_params(&arch, &Rng::new(66)).unwrap();
            let view = FlatParamView::new(&net);
            let mut state = OptimState::new(&net);
            for _ in 0..4 {
                net.loss_and_grad(&x, &labels).unwrap();
                for dense in net.dense_layers_mut() {
                    dense.grad_weights.data_mut().fill(0.0);
                }
                apply_update(&mut net, &view, &mut state, 0.9, 0.05, kind, lambda).unwrap();
            }
            let biases = net
                .dense_layers()
                .flat_map(|d| d.bias().data().iter().copied())
                .collect();
            let weights = view.gather(&net, FlatSource::Params).into_data();
            (biases, weights)
        };

        let (bias_plain, w_plain) = run(RegKind::L2, 0.0);
        let (bias_l2, w_l2) = run(RegKind::L2, 0.5);
        let (bias_l1, w_l1) = run(RegKind::L1, 0.5);
        assert_eq!(bias_plain, bias_l2);
        assert_eq!(bias_plain, bias_l1);
        // The penalties did act on the weights.
        assert_ne!(w_plain, w_l2);
        assert_ne!(w_plain, w_l1);
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_trajectories() {
        let arch = Architecture::mlp(6, 10, 2, 3, 0.0);
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters,
            classes: 3,
            dim: 6,
            train_per_class: 20,
            test_per_class: 5,
            noise: 1.0,
            seed: 12,
        };
        let (train, _) = gen_synthetic(&spec).unwrap();
        let cfg = OptimizerConfig::default();
        let sched = RegSchedule::none();
        let run = || -> Vec<f64> {
            let mut net = init_params(&arch, &Rng::new(99)).unwrap();
            let view = FlatParamView::new(&net);
            let mut state = OptimState::new(&net);
            let rng = Rng::new(99);
            let mut losses = Vec::new();
            for _ in 0..2 {
                let em =
                    run_epoch(&mut net, &view, &train, &mut state, &cfg, &sched, 16, &rng).unwrap();
                losses.push(em.mean_loss);
            }
            losses
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn single_batch_epoch_equals_its_step() {
        let arch = Architecture::mlp(4, 6, 1, 2, 0.0);
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters,
            classes: 2,
            dim: 4,
            train_per_class: 4,
            test_per_class: 2,
            noise: 0.3,
            seed: 21,
        };
        let (train, _) = gen_synthetic(&spec).unwrap();
        let cfg = OptimizerConfig::default();
        let sched = RegSchedule::constant(RegKind::L2, 1e-3);
        let mut net = init_params(&arch, &Rng::new(2)).unwrap();
        let view = FlatParamView::new(&net);
        let mut state = OptimState::new(&net);
        let rng = Rng::new(2);
        let em = run_epoch(
            &mut net,
            &view,
            &train,
            &mut state,
            &cfg,
            &sched,
            64,
            &rng,
        )
        .unwrap();
        assert_eq!(em.steps, 1);
        assert_eq!(em.mean_effective_lambda, 1e-3);
        assert_eq!(state.epoch, 1);
    }

    #[test]
    fn strong_constant_l2_shrinks_weights_monotonically() {
        // Desk-scale analog of the collapse mechanism: far beyond tolerance,
        // the mean |w| trace decreases at every epoch after the first.
        let arch = Architecture::mlp(8, 16, 2, 4, 0.0);
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters,
            classes: 4,
            dim: 8,
            train_per_class: 30,
            test_per_class: 5,
            noise: 1.0,
            seed: 33,
        };
        let (train, _) = gen_synthetic(&spec).unwrap();
        let cfg = OptimizerConfig::default();
        let sched = RegSchedule::constant(RegKind::L2, 0.1);
        let mut net = init_params(&arch, &Rng::new(5)).unwrap();
        let view = FlatParamView::new(&net);
        let mut state = OptimState::new(&net);
        let rng = Rng::new(5);
        let mut trace = Vec::new();
        for _ in 0..6 {
            run_epoch(&mut net, &view, &train, &mut state, &cfg, &sched, 32, &rng).unwrap();
            trace.push(view.gather(&net, FlatSource::Params).abs_mean().unwrap());
        }
        for pair in trace.windows(2).skip(1) {
            assert!(pair[1] < pair[0], "avg|w| trace not decreasing: {trace:?}");
        }
    }

    #[test]
    fn coherence_gate_skips_regularization_when_pi_low() {
        // With a gate threshold of 1.0 the penalty can never be applied
        // (pi > 1 is impossible), so the run matches the unregularized one.
        let arch = Architecture::mlp(4, 8, 1, 2, 0.0);
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters,
            classes: 2,
            dim: 4,
            train_per_class: 10,
            test_per_class: 5,
            noise: 0.4,
            seed: 3,
        };
        let (train, _) = gen_synthetic(&spec).unwrap();
        let cfg = OptimizerConfig::default();
        let run = |sched: RegSchedule| -> Vec<f64> {
            let mut net = init_params(&arch, &Rng::new(10)).unwrap();
            let view = FlatParamView::new(&net);
            let mut state = OptimState::new(&net);
            let rng = Rng::new(10);
            for _ in 0..2 {
                run_epoch(&mut net, &view, &train, &mut state, &cfg, &sched, 8, &rng).unwrap();
            }
            view.gather(&net, FlatSource::Params).into_data()
        };
        let gated = run(RegSchedule::coherence_gated(RegKind::L2, 0.5, 1.0));
        let plain = run(RegSchedule::none());
        assert_eq!(gated, plain);
    }

    #[test]
    fn eval_mode_is_untouched_by_training_state() {
        let arch = Architecture::mlp(4, 8, 1, 2, 0.3);
        let mut net = init_params(&arch, &Rng::new(14)).unwrap();
        let x = Tensor::matrix(2, 4, vec![0.5; 8]).unwrap();
        let a = net.forward(&x, Mode::Eval).unwrap();
        let b = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }
}
