//! L1/L2 penalties, the proximal soft-threshold operator, the gradient sign
//! coherence rate, and the gated regularization schedules.
//!
//! Conventions at the non-smooth points, fixed once here and relied on by the
//! optimizer and the metrics:
//! - the L1 subgradient at `w = 0` is `0` (minimal-norm element);
//! - the step function used by the coherence rate is `0` at `0`, so a total
//!   gradient that cancels to exactly zero counts as incoherent;
//! - a batch with no nonzero loss gradients reports full coherence, since
//!   there is nothing for the penalty to corrupt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum RegError {
    #[error("soft threshold requires z >= 0, got {z}")]
    NegativeThreshold { z: f64 },
    #[error("gradient vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("coherence gate needs a coherence rate, none was supplied")]
    MissingCoherence,
}

/// Which norm the penalty term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    L1,
    L2,
}

/// When the penalty is switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GateMode {
    /// Penalty active at every step.
    Constant,
    /// Penalty off before epoch `gamma`, on from `gamma` onward.
    EpochGate { gamma: usize },
    /// Penalty on only at steps where the sign coherence rate exceeds `mu`.
    CoherenceGate { mu: f64 },
}

/// A regularizer choice: norm, base strength, and gate.
///
/// The effective strength at any step is either `0` or `lambda`, never an
/// intermediate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegSchedule {
    pub kind: RegKind,
    pub lambda: f64,
    pub gate: GateMode,
}

impl RegSchedule {
    pub fn constant(kind: RegKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            gate: GateMode::Constant,
        }
    }

    pub fn epoch_gated(kind: RegKind, lambda: f64, gamma: usize) -> Self {
        Self {
            kind,
            lambda,
            gate: GateMode::EpochGate { gamma },
        }
    }

    pub fn coherence_gated(kind: RegKind, lambda: f64, mu: f64) -> Self {
        Self {
            kind,
            lambda,
            gate: GateMode::CoherenceGate { mu },
        }
    }

    /// Unregularized baseline.
    pub fn none() -> Self {
        Self::constant(RegKind::L2, 0.0)
    }
}

/// Sign coherence between loss gradients and penalized total gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    /// Fraction of counted entries whose total-gradient sign matches the
    /// loss-gradient sign; in `[0, 1]`.
    pub pi: f64,
    /// Entries with a nonzero loss gradient (the only ones measured).
    pub counted: usize,
    /// Total number of parameters.
    pub total: usize,
}

/// Penalty value `Omega(w)` without the `lambda` factor: `sum w^2` for L2,
/// `sum |w|` for L1.
pub fn penalty_value(w_flat: &Tensor, kind: RegKind) -> f64 {
    match kind {
        RegKind::L2 => w_flat.data().iter().map(|w| w * w).sum(),
        RegKind::L1 => w_flat.data().iter().map(|w| w.abs()).sum(),
    }
}

/// Penalty gradient `dOmega/dw`: `2w` for L2, `sign(w)` for L1 (0 at 0).
pub fn penalty_grad(w_flat: &Tensor, kind: RegKind) -> Tensor {
    match kind {
        RegKind::L2 => w_flat.ew_map(|w| 2.0 * w),
        RegKind::L1 => w_flat.ew_map(sign),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Soft threshold `S(a, z)`: shrink `a` toward zero by `z`, clamping to exact
/// zero inside `[-z, z]`.
pub fn soft_threshold(a: f64, z: f64) -> Result<f64, RegError> {
    if z < 0.0 || z.is_nan() {
        return Err(RegError::NegativeThreshold { z });
    }
    Ok(soft_threshold_unchecked(a, z))
}

#[inline]
fn soft_threshold_unchecked(a: f64, z: f64) -> f64 {
    if a > z {
        a - z
    } else if a < -z {
        a + z
    } else {
        0.0
    }
}

/// Element-wise soft threshold; the exact proximal step for the L1 penalty.
/// Produces exact zeros, never just small values.
pub fn prox_step(w_flat: &Tensor, threshold: f64) -> Result<Tensor, RegError> {
    if threshold < 0.0 || threshold.is_nan() {
        return Err(RegError::NegativeThreshold { z: threshold });
    }
    Ok(w_flat.ew_map(|w| soft_threshold_unchecked(w, threshold)))
}

/// Gradient sign coherence rate between the loss gradient and the total
/// gradient `g + r`, where `r` is the penalty gradient already scaled by
/// `lambda`.
///
/// Entries with `g = 0` are excluded from the count. An entry is coherent
/// when `sign(g) * sign(g + r) > 0`; a total of exactly zero is incoherent.
/// With no counted entries the rate is `1`.
pub fn coherence_rate(
    g_loss: &Tensor,
    g_reg_scaled: &Tensor,
) -> Result<CoherenceReport, RegError> {
    if g_loss.len() != g_reg_scaled.len() {
        return Err(RegError::LengthMismatch {
            left: g_loss.len(),
            right: g_reg_scaled.len(),
        });
    }
    let mut counted = 0usize;
    let mut coherent = 0usize;
    for (&g, &r) in g_loss.data().iter().zip(g_reg_scaled.data()) {
        if g == 0.0 {
            continue;
        }
        counted += 1;
        if sign(g) * sign(g + r) > 0.0 {
            coherent += 1;
        }
    }
    let pi = if counted == 0 {
        1.0
    } else {
        coherent as f64 / counted as f64
    };
    Ok(CoherenceReport {
        pi,
        counted,
        total: g_loss.len(),
    })
}

/// Effective strength `lambda^(t)` for the given epoch and (for the coherence
/// gate) the current coherence rate. Always returns `0` or `sched.lambda`.
pub fn effective_lambda(
    sched: &RegSchedule,
    epoch: usize,
    pi: Option<f64>,
) -> Result<f64, RegError> {
    match sched.gate {
        GateMode::Constant => Ok(sched.lambda),
        GateMode::EpochGate { gamma } => Ok(if epoch >= gamma { sched.lambda } else { 0.0 }),
        GateMode::CoherenceGate { mu } => {
            let pi = pi.ok_or(RegError::MissingCoherence)?;
            Ok(if pi > mu { sched.lambda } else { 0.0 })
        }
    }
}
