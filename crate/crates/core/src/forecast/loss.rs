//! Winner-takes-all forecasting loss.
//!
//! The best mode is the one with the smallest masked average displacement
//! to ground truth (ties go to the lowest index). Its regression error is a
//! smooth-L1 penalty on future positions relative to the query position,
//! averaged over valid frames; a cross-entropy term pushes its confidence
//! toward one.

use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::types::MultiModalPrediction;

pub const HUBER_DELTA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub regression: f64,
    pub confidence: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { regression: 1.0, confidence: 0.1 }
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < HUBER_DELTA {
        0.5 * x * x / HUBER_DELTA
    } else {
        a - 0.5 * HUBER_DELTA
    }
}

pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < HUBER_DELTA {
        x / HUBER_DELTA
    } else {
        x.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WtaLoss {
    pub total: f64,
    pub regression: f64,
    pub confidence: f64,
    pub best_mode: usize,
}

/// Gradients of [`WtaLoss::total`] with respect to per-step movements and
/// confidence logits.
#[derive(Debug, Clone, PartialEq)]
pub struct WtaGrad {
    pub modes: Vec<Vec<[f64; 2]>>,
    pub logits: Vec<f64>,
}

fn cumulative(steps: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut acc = [0.0, 0.0];
    steps
        .iter()
        .map(|s| {
            acc = [acc[0] + s[0], acc[1] + s[1]];
            acc
        })
        .collect()
}

/// Masked average displacement of one movement sequence.
pub(crate) fn masked_ade(steps: &[[f64; 2]], gt: &GroundTruth) -> Option<f64> {
    let pos = cumulative(steps);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (j, p) in pos.iter().enumerate() {
        if gt.valid[j] {
            sum += (p[0] - gt.offsets[j][0]).hypot(p[1] - gt.offsets[j][1]);
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

pub(crate) fn best_mode(modes: &[Vec<[f64; 2]>], gt: &GroundTruth) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, m) in modes.iter().enumerate() {
        if let Some(d) = masked_ade(m, gt) {
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
    }
    best
}

/// Smooth-L1 regression of one trajectory against ground truth and its
/// gradient with respect to the per-step movements.
pub(crate) fn regression_loss_grad(steps: &[[f64; 2]], gt: &GroundTruth) -> (f64, Vec<[f64; 2]>) {
    let pos = cumulative(steps);
    let n_valid = gt.valid.iter().filter(|&&v| v).count();
    let mut grad = vec![[0.0, 0.0]; steps.len()];
    if n_valid == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / n_valid as f64;
    let mut loss = 0.0;
    let mut g_pos = vec![[0.0, 0.0]; steps.len()];
    for j in 0..steps.len() {
        if !gt.valid[j] {
            continue;
        }
        for a in 0..2 {
            let e = pos[j][a] - gt.offsets[j][a];
            loss += smooth_l1(e) * inv;
            g_pos[j][a] = smooth_l1_grad(e) * inv;
        }
    }
    // Positions are prefix sums of steps, so step gradients are suffix sums.
    let mut acc = [0.0, 0.0];
    for j in (0..steps.len()).rev() {
        acc = [acc[0] + g_pos[j][0], acc[1] + g_pos[j][1]];
        grad[j] = acc;
    }
    (loss, grad)
}

/// Loss and gradients for raw mode arrays. `probs` must be the softmax of
/// the confidence logits for the logit gradient to be meaningful.
pub fn wta_loss_grad(modes: &[Vec<[f64; 2]>], probs: &[f64], gt: &GroundTruth, weights: &LossWeights) -> (WtaLoss, WtaGrad) {
    let k = modes.len();
    let mut grad = WtaGrad { modes: vec![vec![[0.0, 0.0]; modes[0].len()]; k], logits: vec![0.0; k] };
    if !gt.any_valid() {
        return (WtaLoss { total: 0.0, regression: 0.0, confidence: 0.0, best_mode: 0 }, grad);
    }
    let best = best_mode(modes, gt);
    let (reg, g_reg) = regression_loss_grad(&modes[best], gt);
    grad.modes[best] = g_reg.into_iter().map(|g| [g[0] * weights.regression, g[1] * weights.regression]).collect();
    let ce = -probs[best].max(1e-300).ln();
    for (i, p) in probs.iter().enumerate() {
        grad.logits[i] = weights.confidence * (p - if i == best { 1.0 } else { 0.0 });
    }
    let total = weights.regression * reg + weights.confidence * ce;
    (WtaLoss { total, regression: reg, confidence: ce, best_mode: best }, grad)
}

pub fn wta_loss(prediction: &MultiModalPrediction, gt: &GroundTruth, weights: &LossWeights) -> WtaLoss {
    let modes: Vec<Vec<[f64; 2]>> = prediction.modes().iter().map(|m| m.steps().to_vec()).collect();
    wta_loss_grad(&modes, prediction.confidences(), gt, weights).0
}
