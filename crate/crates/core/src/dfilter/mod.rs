//! Differentiable Kalman filter that refines each predicted mode by fusing
//! it with the previous frame's refined prediction.
//!
//! Per agent, mode and axis the state is the `tau_f` future movements.
//! Prediction shifts the previous posterior by one frame; the new raw
//! prediction is the observation, with diagonal noise `diag(r^2)` where
//! `r = phi_R(F_t, occluded)`. Because `R`, `A`, `Q` and the birth prior do
//! not depend on the mode, all modes of an agent share one covariance per
//! axis and only the means are per mode.

mod kalman;

pub use kalman::{
    compute_gain, inverse_backward, predict_backward, predict_step, update_backward, update_step, FilterState,
    GainGrad, GainTape, ObservationModel, ProcessModel,
};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpTrace};
use crate::types::{MovementTrajectory, MultiModalPrediction};

/// How modes at frame `t` are paired with filter states from `t-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeAssociation {
    #[default]
    Index,
    /// Greedy minimum distance between a raw mode and each state's
    /// shifted mean over the overlapping steps.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DfConfig {
    pub q: f64,
    pub sigma0: f64,
    pub hidden: usize,
    /// Initial output of `phi_R` (a standard deviation, meters/frame).
    pub init_r: f64,
    pub association: ModeAssociation,
}

impl Default for DfConfig {
    fn default() -> Self {
        Self { q: 0.01, sigma0: 1.0, hidden: 64, init_r: 0.1, association: ModeAssociation::Index }
    }
}

/// `phi_R`: feature vector plus occlusion flag to per-step noise standard
/// deviations, x axis first then y.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceNet {
    mlp: Mlp,
    params: Vec<f64>,
    feature_dim: usize,
    tau_f: usize,
}

impl CovarianceNet {
    pub fn new(feature_dim: usize, tau_f: usize, hidden: usize, init_r: f64, seed: u64) -> Self {
        let mlp = Mlp::new(vec![feature_dim + 1, hidden, 2 * tau_f]);
        let mut params = vec![0.0; mlp.num_params()];
        mlp.init(&mut ChaCha8Rng::seed_from_u64(seed), &mut params);
        let w0 = mlp.output_weight_offset();
        let b0 = mlp.output_bias_offset();
        params[w0..b0].iter_mut().for_each(|w| *w *= 0.01);
        params[b0..].iter_mut().for_each(|b| *b = init_r);
        Self { mlp, params, feature_dim, tau_f }
    }

    pub fn from_params(feature_dim: usize, tau_f: usize, hidden: usize, params: Vec<f64>) -> Option<Self> {
        let mlp = Mlp::new(vec![feature_dim + 1, hidden, 2 * tau_f]);
        (params.len() == mlp.num_params()).then_some(Self { mlp, params, feature_dim, tau_f })
    }

    /// A net whose output is `value` for every input.
    pub fn constant(feature_dim: usize, tau_f: usize, hidden: usize, value: f64) -> Self {
        let mut net = Self::new(feature_dim, tau_f, hidden, value, 0);
        let b0 = net.mlp.output_bias_offset();
        net.params[net.mlp.output_weight_offset()..b0].iter_mut().for_each(|w| *w = 0.0);
        net
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn tau_f(&self) -> usize {
        self.tau_f
    }

    pub fn hidden(&self) -> usize {
        self.mlp.sizes()[1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn input(&self, feature: &[f64], occluded: bool) -> Vec<f64> {
        assert_eq!(feature.len(), self.feature_dim, "feature size");
        let mut x = feature.to_vec();
        x.push(if occluded { 1.0 } else { 0.0 });
        x
    }

    pub fn forward(&self, feature: &[f64], occluded: bool) -> MlpTrace {
        self.mlp.forward(&self.params, &self.input(feature, occluded))
    }

    pub fn apply(&self, feature: &[f64], occluded: bool) -> Vec<f64> {
        self.mlp.apply(&self.params, &self.input(feature, occluded))
    }

    /// Accumulates parameter gradients and returns the gradient with
    /// respect to the feature (the flag's entry dropped).
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        let mut g = self.mlp.backward(&self.params, trace, grad_out, grad_params);
        g.truncate(self.feature_dim);
        g
    }
}

/// Filter belief for one agent: per-mode means for each axis and the
/// covariance shared by all modes.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentFilter {
    pub means: Vec<[DVector<f64>; 2]>,
    pub covs: [DMatrix<f64>; 2],
}

impl AgentFilter {
    pub fn birth(raw: &MultiModalPrediction, sigma0: f64) -> Self {
        let n = raw.horizon();
        let means = raw.modes().iter().map(|m| [DVector::from_vec(m.axis(0)), DVector::from_vec(m.axis(1))]).collect();
        let cov = DMatrix::identity(n, n) * (sigma0 * sigma0);
        Self { means, covs: [cov.clone(), cov] }
    }

    pub fn num_modes(&self) -> usize {
        self.means.len()
    }

    pub fn mode_state(&self, mode: usize, axis: usize) -> FilterState {
        FilterState::new(self.means[mode][axis].clone(), self.covs[axis].clone())
    }
}

/// Gradient with respect to an [`AgentFilter`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentFilterGrad {
    pub means: Vec<[DVector<f64>; 2]>,
    pub covs: [DMatrix<f64>; 2],
}

impl AgentFilterGrad {
    pub fn zeros(k: usize, n: usize) -> Self {
        Self {
            means: vec![[DVector::zeros(n), DVector::zeros(n)]; k],
            covs: [DMatrix::zeros(n, n), DMatrix::zeros(n, n)],
        }
    }
}

/// Everything one refinement recorded for the backward pass.
#[derive(Debug, Clone)]
pub struct RefineTape {
    birth: bool,
    trace: Option<MlpTrace>,
    r: Vec<f64>,
    gains: Vec<GainTape>,
    prior_means: Vec<[DVector<f64>; 2]>,
    observations: Vec<[DVector<f64>; 2]>,
    /// `assignment[k]` is the previous state used for raw mode `k`.
    assignment: Vec<usize>,
}

impl RefineTape {
    pub fn is_birth(&self) -> bool {
        self.birth
    }

    /// Per-axis `(prior diagonal, posterior diagonal)` of this update.
    pub fn covariance_diagonals(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.gains
            .iter()
            .map(|g| (g.prior_cov.diagonal().iter().copied().collect(), g.post_cov.diagonal().iter().copied().collect()))
            .collect()
    }
}

/// Gradients flowing out of one refinement.
#[derive(Debug, Clone)]
pub struct RefineGrad {
    /// With respect to the raw modes' world-frame movements.
    pub raw_modes: Vec<Vec<[f64; 2]>>,
    /// With respect to the feature vector fed to `phi_R`.
    pub feature: Vec<f64>,
    /// With respect to the previous state; `None` at birth.
    pub previous: Option<AgentFilterGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentiableFilter {
    pub net: CovarianceNet,
    pub process: ProcessModel,
    pub config: DfConfig,
}

impl DifferentiableFilter {
    pub fn new(feature_dim: usize, tau_f: usize, config: DfConfig, seed: u64) -> Self {
        Self {
            net: CovarianceNet::new(feature_dim, tau_f, config.hidden, config.init_r, seed),
            process: ProcessModel::new(tau_f, config.q),
            config,
        }
    }

    pub fn with_net(net: CovarianceNet, config: DfConfig) -> Self {
        let process = ProcessModel::new(net.tau_f(), config.q);
        Self { net, process, config }
    }

    pub fn tau_f(&self) -> usize {
        self.process.dim
    }

    pub fn refine(
        &self,
        raw: &MultiModalPrediction,
        feature: &[f64],
        occluded: bool,
        previous: Option<&AgentFilter>,
    ) -> Result<(MultiModalPrediction, AgentFilter)> {
        self.refine_recorded(raw, feature, occluded, previous).map(|(p, s, _)| (p, s))
    }

    pub fn refine_recorded(
        &self,
        raw: &MultiModalPrediction,
        feature: &[f64],
        occluded: bool,
        previous: Option<&AgentFilter>,
    ) -> Result<(MultiModalPrediction, AgentFilter, RefineTape)> {
        let n = self.tau_f();
        if raw.horizon() != n {
            return Err(Error::InvalidInput(format!("prediction horizon {} does not match filter horizon {n}", raw.horizon())));
        }
        let k = raw.num_modes();
        let observations: Vec<[DVector<f64>; 2]> =
            raw.modes().iter().map(|m| [DVector::from_vec(m.axis(0)), DVector::from_vec(m.axis(1))]).collect();
        let Some(prev) = previous else {
            let state = AgentFilter::birth(raw, self.config.sigma0);
            let tape = RefineTape {
                birth: true,
                trace: None,
                r: Vec::new(),
                gains: Vec::new(),
                prior_means: Vec::new(),
                observations,
                assignment: (0..k).collect(),
            };
            return Ok((raw.clone(), state, tape));
        };
        if prev.num_modes() != k || prev.covs[0].nrows() != n {
            return Err(Error::InvalidInput("filter state does not match prediction shape".into()));
        }
        let trace = self.net.forward(feature, occluded);
        let r = trace.output().to_vec();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation noise".into()));
        }
        let shifted: Vec<[DVector<f64>; 2]> =
            prev.means.iter().map(|m| [self.process.apply_mean(&m[0]), self.process.apply_mean(&m[1])]).collect();
        let assignment = match self.config.association {
            ModeAssociation::Index => (0..k).collect(),
            ModeAssociation::Greedy => greedy_assignment(&shifted, &observations),
        };
        let prior_means: Vec<[DVector<f64>; 2]> = assignment.iter().map(|&j| shifted[j].clone()).collect();
        let mut gains = Vec::with_capacity(2);
        let mut post_means: Vec<[DVector<f64>; 2]> = prior_means.clone();
        for axis in 0..2 {
            let prior_cov = self.process.apply_cov(&prev.covs[axis]);
            let obs = ObservationModel::from_std(&r[axis * n..(axis + 1) * n]);
            let g = compute_gain(&prior_cov, &obs)?;
            for m in 0..k {
                let e = &observations[m][axis] - &prior_means[m][axis];
                post_means[m][axis] = &prior_means[m][axis] + &g.gain * e;
            }
            gains.push(g);
        }
        let modes = post_means
            .iter()
            .map(|m| MovementTrajectory::from_axes(m[0].as_slice(), m[1].as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let refined = raw.with_modes(modes)?;
        let state = AgentFilter { means: post_means, covs: [gains[0].post_cov.clone(), gains[1].post_cov.clone()] };
        let tape = RefineTape { birth: false, trace: Some(trace), r, gains, prior_means, observations, assignment };
        Ok((refined, state, tape))
    }

    /// Reverse pass of one refinement. `g_refined[k][j]` is the loss
    /// gradient with respect to refined mode `k`'s movement at step `j`;
    /// `g_next` is the gradient arriving from later frames through the
    /// returned state. Parameter gradients of `phi_R` accumulate into
    /// `grad_params`.
    pub fn refine_backward(
        &self,
        tape: &RefineTape,
        g_refined: &[Vec<[f64; 2]>],
        g_next: Option<&AgentFilterGrad>,
        grad_params: &mut [f64],
    ) -> RefineGrad {
        let n = self.tau_f();
        let k = tape.observations.len();
        let g_post: Vec<[DVector<f64>; 2]> = (0..k)
            .map(|m| {
                let mut g = [
                    DVector::from_iterator(n, g_refined[m].iter().map(|v| v[0])),
                    DVector::from_iterator(n, g_refined[m].iter().map(|v| v[1])),
                ];
                if let Some(next) = g_next {
                    g[0] += &next.means[m][0];
                    g[1] += &next.means[m][1];
                }
                g
            })
            .collect();
        let to_steps = |g: &[[DVector<f64>; 2]]| -> Vec<Vec<[f64; 2]>> {
            g.iter().map(|a| (0..n).map(|j| [a[0][j], a[1][j]]).collect()).collect()
        };
        if tape.birth {
            // Birth copies the raw modes; the initial covariance is constant.
            return RefineGrad { raw_modes: to_steps(&g_post), feature: vec![0.0; self.net.feature_dim()], previous: None };
        }
        let mut g_raw = vec![[DVector::zeros(n), DVector::zeros(n)]; k];
        let mut g_prev = AgentFilterGrad::zeros(k, n);
        let mut g_r = vec![0.0; 2 * n];
        for axis in 0..2 {
            let priors: Vec<DVector<f64>> = tape.prior_means.iter().map(|m| m[axis].clone()).collect();
            let zs: Vec<DVector<f64>> = tape.observations.iter().map(|m| m[axis].clone()).collect();
            let gs: Vec<DVector<f64>> = g_post.iter().map(|m| m[axis].clone()).collect();
            let (g_priors, g_zs, g_gain) =
                update_backward(&tape.gains[axis], &priors, &zs, &gs, g_next.map(|g| &g.covs[axis]));
            for m in 0..k {
                g_raw[m][axis] = g_zs[m].clone();
                g_prev.means[tape.assignment[m]][axis] += self.process.transpose_mean(&g_priors[m]);
            }
            g_prev.covs[axis] = self.process.transpose_cov(&g_gain.prior_cov);
            for j in 0..n {
                g_r[axis * n + j] = 2.0 * tape.r[axis * n + j] * g_gain.r_diag[j];
            }
        }
        let trace = tape.trace.as_ref().expect("non-birth tape records the net");
        let feature = self.net.backward(trace, &g_r, grad_params);
        RefineGrad { raw_modes: to_steps(&g_raw), feature, previous: Some(g_prev) }
    }
}

fn greedy_assignment(shifted: &[[DVector<f64>; 2]], raw: &[[DVector<f64>; 2]]) -> Vec<usize> {
    let k = raw.len();
    let n = raw.first().map_or(0, |m| m[0].len());
    let overlap = n.saturating_sub(1).max(1);
    let mut pairs = Vec::with_capacity(k * k);
    for (i, z) in raw.iter().enumerate() {
        for (j, s) in shifted.iter().enumerate() {
            let mut d = 0.0;
            let (mut px, mut py, mut qx, mut qy) = (0.0, 0.0, 0.0, 0.0);
            for t in 0..overlap {
                px += z[0][t];
                py += z[1][t];
                qx += s[0][t];
                qy += s[1][t];
                d += (px - qx).hypot(py - qy);
            }
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for (_, i, j) in pairs {
        if assignment[i] == usize::MAX && !used[j] {
            assignment[i] = j;
            used[j] = true;
        }
    }
    assignment
}

#[cfg(test)]
mod tests;
