//! Learned reference forecaster.
//!
//! Inputs are expressed in an agent-centric frame (heading from recent
//! motion): the target's history displacements, lane geometry around the
//! nearest heading-aligned centerline, and nearest-neighbor statistics.
//! An MLP encoder produces the feature; the decoder has a regression head
//! with one `tau_f x 2` block per mode, a confidence head, and a separate
//! single-mode head. Decoded movements are residuals on top of the recent
//! mean velocity; the residual of step `j` is scaled by `(j + 1) / tau_f`,
//! so near-term steps stay close to the observed motion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureVector, HistoryWindow, LocalFrame};
use crate::nn::{Mlp, MlpTrace};
use crate::types::{AgentId, FrameIndex, HorizonConfig, MovementTrajectory, MultiModalPrediction};

const HEADING_FRAMES: usize = 5;
const BASE_VELOCITY_FRAMES: usize = 3;
const MIN_HEADING_TRAVEL: f64 = 0.25;
const LANE_SNAP_M: f64 = 8.0;
const NEIGHBOR_RADIUS_M: f64 = 30.0;
const LOOKAHEAD_TANGENTS_M: [f64; 6] = [0.0, 5.0, 10.0, 20.0, 30.0, 45.0];
const LOOKAHEAD_POINTS_M: [f64; 2] = [15.0, 30.0];

/// Non-learned encoder input: the agent-centric input vector and the local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub values: Vec<f64>,
    pub frame: LocalFrame,
}

pub fn input_dim(tau_h: usize) -> usize {
    2 * (tau_h - 1) + 1 + 2 + 2 * LOOKAHEAD_TANGENTS_M.len() + 2 * LOOKAHEAD_POINTS_M.len() + 5
}

fn normalize(v: [f64; 2]) -> Option<(f64, f64)> {
    let n = v[0].hypot(v[1]);
    (n > 1e-12).then(|| (v[0] / n, v[1] / n))
}

/// Builds the agent-centric input vector. Every entry depends on positions
/// only through differences, so translating the window leaves it unchanged.
pub fn featurize(window: &HistoryWindow) -> EncoderInput {
    let disp = window.displacements();
    let cur = window.current();
    let recent = &disp[disp.len().saturating_sub(HEADING_FRAMES)..];
    let sum = recent.iter().fold([0.0, 0.0], |a, d| [a[0] + d[0], a[1] + d[1]]);
    let motion_heading =
        if sum[0].hypot(sum[1]) > MIN_HEADING_TRAVEL { normalize(sum) } else { None };
    let heading = motion_heading
        .or_else(|| {
            window
                .lane_map
                .nearest_lane(cur, None)
                .filter(|p| p.distance < LANE_SNAP_M)
                .map(|p| p.tangent)
        })
        .unwrap_or((1.0, 0.0));
    let mut frame = LocalFrame { heading, base_velocity: [0.0, 0.0] };
    let base = &disp[disp.len().saturating_sub(BASE_VELOCITY_FRAMES)..];
    let bn = base.len().max(1) as f64;
    let bv = base.iter().fold([0.0, 0.0], |a, d| [a[0] + d[0] / bn, a[1] + d[1] / bn]);
    frame.base_velocity = frame.to_local(bv);

    let mut values = Vec::with_capacity(input_dim(window.target.len()));
    for d in &disp {
        values.extend(frame.to_local(*d));
    }

    match window.lane_map.nearest_lane(cur, Some(heading)).filter(|p| p.distance < LANE_SNAP_M) {
        Some(proj) => {
            values.push(1.0);
            let off = frame.to_local([cur.x - proj.point.x, cur.y - proj.point.y]);
            values.extend([off[0] / 5.0, off[1] / 5.0]);
            for ds in LOOKAHEAD_TANGENTS_M {
                let (_, t) = window.lane_map.point_at(proj.lane, proj.arc_length + ds);
                values.extend(frame.to_local([t.0, t.1]));
            }
            for ds in LOOKAHEAD_POINTS_M {
                let (p, _) = window.lane_map.point_at(proj.lane, proj.arc_length + ds);
                let rel = frame.to_local([p.x - cur.x, p.y - cur.y]);
                values.extend([rel[0] / 30.0, rel[1] / 30.0]);
            }
        }
        None => {
            values.extend(std::iter::repeat_n(0.0, 3 + 2 * LOOKAHEAD_TANGENTS_M.len() + 2 * LOOKAHEAD_POINTS_M.len()));
        }
    }

    let own_vel = *disp.last().unwrap_or(&[0.0, 0.0]);
    let mut nearest: Option<(f64, [f64; 2], [f64; 2])> = None;
    let mut count = 0usize;
    for n in &window.neighbors {
        let Some(p) = n.last() else { continue };
        let rel = [p.x - cur.x, p.y - cur.y];
        let dist = rel[0].hypot(rel[1]);
        if dist > NEIGHBOR_RADIUS_M {
            continue;
        }
        count += 1;
        let vel = if n.len() >= 2 {
            let q = n[n.len() - 2];
            [p.x - q.x - own_vel[0], p.y - q.y - own_vel[1]]
        } else {
            [-own_vel[0], -own_vel[1]]
        };
        if nearest.is_none_or(|(d, _, _)| dist < d) {
            nearest = Some((dist, rel, vel));
        }
    }
    match nearest {
        Some((_, rel, vel)) => {
            let r = frame.to_local(rel);
            let v = frame.to_local(vel);
            values.extend([r[0] / NEIGHBOR_RADIUS_M, r[1] / NEIGHBOR_RADIUS_M, v[0], v[1]]);
        }
        None => values.extend([0.0; 4]),
    }
    values.push(count as f64 / 10.0);
    debug_assert_eq!(values.len(), input_dim(window.target.len()));
    EncoderInput { values, frame }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnedArch {
    pub input_dim: usize,
    pub hidden: usize,
    pub feature_dim: usize,
}

impl LearnedArch {
    pub fn for_horizon(horizon: &HorizonConfig) -> Self {
        Self { input_dim: input_dim(horizon.tau_h), hidden: 64, feature_dim: 64 }
    }
}

/// Everything recorded by a forward pass, in world-frame coordinates.
#[derive(Debug, Clone)]
pub struct LearnedForward {
    enc: MlpTrace,
    pub feature: Vec<f64>,
    reg: MlpTrace,
    conf: MlpTrace,
    single: MlpTrace,
    pub frame: LocalFrame,
    /// `modes[k][j]` world-frame movement of mode `k` at step `j`.
    pub modes: Vec<Vec<[f64; 2]>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub single_steps: Vec<[f64; 2]>,
}

/// Upstream gradients for [`LearnedModel::backward`].
#[derive(Debug, Clone, Default)]
pub struct LearnedGrad {
    pub modes: Option<Vec<Vec<[f64; 2]>>>,
    pub logits: Option<Vec<f64>>,
    pub single_steps: Option<Vec<[f64; 2]>>,
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    horizon: HorizonConfig,
    arch: LearnedArch,
    encoder: Mlp,
    reg: Mlp,
    conf: Mlp,
    single: Mlp,
    params: Vec<f64>,
}

impl LearnedModel {
    fn layers(horizon: &HorizonConfig, arch: &LearnedArch) -> (Mlp, Mlp, Mlp, Mlp) {
        (
            Mlp::new(vec![arch.input_dim, arch.hidden, arch.feature_dim]),
            Mlp::new(vec![arch.feature_dim, arch.hidden, horizon.k * horizon.tau_f * 2]),
            Mlp::new(vec![arch.feature_dim, horizon.k]),
            Mlp::new(vec![arch.feature_dim, arch.hidden, horizon.tau_f * 2]),
        )
    }

    pub fn new(horizon: HorizonConfig, arch: LearnedArch, seed: u64) -> Self {
        let (encoder, reg, conf, single) = Self::layers(&horizon, &arch);
        let n = encoder.num_params() + reg.num_params() + conf.num_params() + single.num_params();
        let mut model = Self { horizon, arch, encoder, reg, conf, single, params: vec![0.0; n] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [e, r, c, s] = model.ranges();
        model.encoder.init(&mut rng, &mut model.params[e.clone()]);
        model.reg.init(&mut rng, &mut model.params[r.clone()]);
        model.conf.init(&mut rng, &mut model.params[c]);
        model.single.init(&mut rng, &mut model.params[s.clone()]);
        // Start close to the constant-velocity prior.
        for (range, mlp) in [(r, &model.reg), (s, &model.single)] {
            let w0 = range.start + mlp.output_weight_offset();
            let w1 = range.start + mlp.output_bias_offset();
            model.params[w0..w1].iter_mut().for_each(|w| *w *= 0.1);
        }
        model
    }

    /// Rebuilds a model from a stored parameter vector.
    pub fn from_params(horizon: HorizonConfig, arch: LearnedArch, params: Vec<f64>) -> Option<Self> {
        let (encoder, reg, conf, single) = Self::layers(&horizon, &arch);
        let n = encoder.num_params() + reg.num_params() + conf.num_params() + single.num_params();
        (params.len() == n && arch.input_dim == input_dim(horizon.tau_h))
            .then_some(Self { horizon, arch, encoder, reg, conf, single, params })
    }

    pub fn horizon(&self) -> HorizonConfig {
        self.horizon
    }

    pub fn arch(&self) -> LearnedArch {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn ranges(&self) -> [std::ops::Range<usize>; 4] {
        let a = self.encoder.num_params();
        let b = a + self.reg.num_params();
        let c = b + self.conf.num_params();
        let d = c + self.single.num_params();
        [0..a, a..b, b..c, c..d]
    }

    pub fn forward(&self, input: &EncoderInput) -> LearnedForward {
        let [re, rr, rc, rs] = self.ranges();
        let enc = self.encoder.forward(&self.params[re], &input.values);
        let feature: Vec<f64> = enc.output().iter().map(|v| v.tanh()).collect();
        let reg = self.reg.forward(&self.params[rr], &feature);
        let conf = self.conf.forward(&self.params[rc], &feature);
        let single = self.single.forward(&self.params[rs], &feature);
        let frame = input.frame;
        let modes = reg.output().chunks_exact(2 * self.horizon.tau_f).map(|c| residual_steps(&frame, c)).collect();
        let single_steps = residual_steps(&frame, single.output());
        let logits = conf.output().to_vec();
        let probs = softmax(&logits);
        LearnedForward { enc, feature, reg, conf, single, frame, modes, logits, probs, single_steps }
    }

    /// Accumulates parameter gradients into `grads` (same layout as `params`).
    pub fn backward(&self, fwd: &LearnedForward, upstream: &LearnedGrad, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        let [re, rr, rc, rs] = self.ranges();
        let fd = self.arch.feature_dim;
        let mut g_feature = upstream.feature.clone().unwrap_or_else(|| vec![0.0; fd]);
        let tau_f = self.horizon.tau_f as f64;
        let local = |g: &[[f64; 2]]| -> Vec<f64> {
            g.iter()
                .enumerate()
                .flat_map(|(j, v)| fwd.frame.to_local(*v).map(|x| x * (j + 1) as f64 / tau_f))
                .collect()
        };
        if let Some(gm) = &upstream.modes {
            let g_out: Vec<f64> = gm.iter().flat_map(|m| local(m)).collect();
            let gf = self.reg.backward(&self.params[rr.clone()], &fwd.reg, &g_out, &mut grads[rr]);
            add_into(&mut g_feature, &gf);
        }
        if let Some(gl) = &upstream.logits {
            let gf = self.conf.backward(&self.params[rc.clone()], &fwd.conf, gl, &mut grads[rc]);
            add_into(&mut g_feature, &gf);
        }
        if let Some(gs) = &upstream.single_steps {
            let gf = self.single.backward(&self.params[rs.clone()], &fwd.single, &local(gs), &mut grads[rs]);
            add_into(&mut g_feature, &gf);
        }
        let g_enc: Vec<f64> = g_feature.iter().zip(&fwd.feature).map(|(g, f)| g * (1.0 - f * f)).collect();
        self.encoder.backward(&self.params[re.clone()], &fwd.enc, &g_enc, &mut grads[re]);
    }

    pub fn encode(&self, window: &HistoryWindow) -> FeatureVector {
        self.encode_input(window.agent_id, window.frame, &featurize(window))
    }

    pub fn encode_input(&self, agent_id: AgentId, frame: FrameIndex, input: &EncoderInput) -> FeatureVector {
        let [re, ..] = self.ranges();
        let enc = self.encoder.apply(&self.params[re], &input.values);
        FeatureVector { agent_id, query_frame: frame, values: enc.iter().map(|v| v.tanh()).collect(), frame: input.frame }
    }

    fn steps_from(&self, frame: &LocalFrame, out: &[f64]) -> MovementTrajectory {
        MovementTrajectory::new(residual_steps(frame, out)).expect("finite decoder output")
    }

    pub fn decode(&self, feature: &FeatureVector) -> MultiModalPrediction {
        let [_, rr, rc, _] = self.ranges();
        let out = self.reg.apply(&self.params[rr], &feature.values);
        let modes = out.chunks_exact(2 * self.horizon.tau_f).map(|c| self.steps_from(&feature.frame, c)).collect();
        let probs = softmax(&self.conf.apply(&self.params[rc], &feature.values));
        MultiModalPrediction::new(feature.agent_id, feature.query_frame, modes, probs).expect("valid decoder output")
    }

    pub fn decode_single(&self, feature: &FeatureVector) -> MovementTrajectory {
        let [.., rs] = self.ranges();
        self.steps_from(&feature.frame, &self.single.apply(&self.params[rs], &feature.values))
    }
}

/// World-frame movements from a flat `[dx0, dy0, dx1, ...]` residual block.
fn residual_steps(frame: &LocalFrame, out: &[f64]) -> Vec<[f64; 2]> {
    let n = (out.len() / 2) as f64;
    out.chunks_exact(2)
        .enumerate()
        .map(|(j, c)| {
            let s = (j + 1) as f64 / n;
            frame.to_world([frame.base_velocity[0] + s * c[0], frame.base_velocity[1] + s * c[1]])
        })
        .collect()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
