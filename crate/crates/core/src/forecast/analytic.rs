//! Kinematic reference forecaster: constant-turn-rate rollouts around the
//! observed speed and turn rate.

use super::{FeatureVector, HistoryWindow, LocalFrame};
use crate::types::{HorizonConfig, MovementTrajectory, MultiModalPrediction};

/// Mode grid as `(speed scale, turn offset in units of delta, prior weight)`,
/// in the order modes are emitted.
pub const ANALYTIC_MODE_GRID: [(f64, f64, f64); 9] = [
    (1.0, 0.0, 0.40),
    (1.0, -1.0, 0.15),
    (1.0, 1.0, 0.15),
    (0.8, 0.0, 0.10),
    (1.2, 0.0, 0.10),
    (0.8, -1.0, 0.025),
    (0.8, 1.0, 0.025),
    (1.2, -1.0, 0.025),
    (1.2, 1.0, 0.025),
];

/// Displacements shorter than this carry no reliable heading.
const MIN_HEADING_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModel {
    pub horizon: HorizonConfig,
    /// Number of most recent displacements averaged for velocity.
    pub velocity_frames: usize,
    /// Turn-rate perturbation in rad/frame.
    pub turn_delta: f64,
    pub max_turn_rate: f64,
}

impl AnalyticModel {
    pub const FEATURE_DIM: usize = 4;

    pub fn new(horizon: HorizonConfig) -> Self {
        assert!(horizon.k <= ANALYTIC_MODE_GRID.len(), "analytic model supports at most 9 modes");
        Self { horizon, velocity_frames: 5, turn_delta: 0.02, max_turn_rate: 0.2 }
    }

    /// Features: `[mean vx, mean vy, turn rate, mean speed]` where the means
    /// run over the last `velocity_frames` displacements and the turn rate is
    /// the mean signed angle between consecutive displacements.
    pub fn encode(&self, window: &HistoryWindow) -> FeatureVector {
        let d = window.displacements();
        let m = self.velocity_frames.min(d.len()).max(1);
        let recent = &d[d.len().saturating_sub(m)..];
        let n = recent.len().max(1) as f64;
        let vx = recent.iter().map(|v| v[0]).sum::<f64>() / n;
        let vy = recent.iter().map(|v| v[1]).sum::<f64>() / n;
        let speed = recent.iter().map(|v| v[0].hypot(v[1])).sum::<f64>() / n;
        let mut turns = Vec::new();
        for w in d.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a[0].hypot(a[1]) > MIN_HEADING_STEP && b[0].hypot(b[1]) > MIN_HEADING_STEP {
                let cross = a[0] * b[1] - a[1] * b[0];
                let dot = a[0] * b[0] + a[1] * b[1];
                turns.push(cross.atan2(dot));
            }
        }
        let turn = if turns.is_empty() { 0.0 } else { turns.iter().sum::<f64>() / turns.len() as f64 };
        FeatureVector {
            agent_id: window.agent_id,
            query_frame: window.frame,
            values: vec![vx, vy, turn.clamp(-self.max_turn_rate, self.max_turn_rate), speed],
            frame: LocalFrame::IDENTITY,
        }
    }

    fn rollout(&self, feature: &FeatureVector, scale: f64, turn_offset: f64) -> MovementTrajectory {
        let [vx, vy, turn, speed] = feature.values[..] else { panic!("analytic feature has 4 entries") };
        let norm = vx.hypot(vy);
        let (dir_x, dir_y) = if norm > 1e-12 { (vx / norm, vy / norm) } else { (0.0, 0.0) };
        // The averaged velocity lags the current heading by (m - 1) / 2 frames.
        let lag = (self.velocity_frames as f64 + 1.0) * 0.5;
        let omega = turn + turn_offset;
        let steps = (0..self.horizon.tau_f)
            .map(|j| {
                let a = if omega == 0.0 { 0.0 } else { omega * (j as f64 + lag) };
                let (s, c) = a.sin_cos();
                [scale * speed * (c * dir_x - s * dir_y), scale * speed * (s * dir_x + c * dir_y)]
            })
            .collect();
        MovementTrajectory::new(steps).expect("finite rollout")
    }

    pub fn decode(&self, feature: &FeatureVector) -> MultiModalPrediction {
        let grid = &ANALYTIC_MODE_GRID[..self.horizon.k];
        let modes = grid.iter().map(|&(sc, off, _)| self.rollout(feature, sc, off * self.turn_delta)).collect();
        let conf = grid.iter().map(|g| g.2).collect();
        MultiModalPrediction::new(feature.agent_id, feature.query_frame, modes, conf).expect("valid analytic prediction")
    }

    pub fn decode_single(&self, feature: &FeatureVector) -> MovementTrajectory {
        self.rollout(feature, 1.0, 0.0)
    }
}
