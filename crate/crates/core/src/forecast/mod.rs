//! Snapshot forecasters: `encode` a history window into a feature, `decode`
//! the feature into K future movement trajectories with confidences.

mod analytic;
mod checkpoint;

mod learned;
pub(crate) mod loss;
mod train;

pub use analytic::{AnalyticModel, ANALYTIC_MODE_GRID};
pub use checkpoint::{Checkpoint, CheckpointStage, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use learned::{featurize, input_dim, softmax, EncoderInput, LearnedArch, LearnedForward, LearnedGrad, LearnedModel};
pub use loss::{smooth_l1, smooth_l1_grad, wta_loss, wta_loss_grad, LossWeights, WtaGrad, WtaLoss};
pub use train::{
    finetune_dataset, pretrain_dataset, train, SnapshotSample, TrainConfig, TrainReport, TrainStage,
};

use crate::scenario::AgentTrack;
use crate::types::{AgentId, FrameIndex, HorizonConfig, LaneMap, MovementTrajectory, MultiModalPrediction, Position2};

/// The last `tau_h` positions of a target agent (oldest first, occluded
/// slots already filled), its neighbors' windows, and the map.
#[derive(Debug, Clone)]
pub struct HistoryWindow<'a> {
    pub agent_id: AgentId,
    pub frame: FrameIndex,
    pub target: &'a [Position2],
    pub neighbors: Vec<&'a [Position2]>,
    pub lane_map: &'a LaneMap,
}

impl HistoryWindow<'_> {
    pub fn current(&self) -> Position2 {
        *self.target.last().expect("non-empty history")
    }

    /// Per-frame displacements of the target, oldest first.
    pub fn displacements(&self) -> Vec<[f64; 2]> {
        self.target.windows(2).map(|w| [w[1].x - w[0].x, w[1].y - w[0].y]).collect()
    }
}

/// Local frame a feature was computed in: forward heading `(cos, sin)` and
/// a constant-velocity prior (local coordinates, meters/frame) that the
/// learned decoder adds to its outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub heading: (f64, f64),
    pub base_velocity: [f64; 2],
}

impl LocalFrame {
    pub const IDENTITY: LocalFrame = LocalFrame { heading: (1.0, 0.0), base_velocity: [0.0, 0.0] };

    pub fn to_local(&self, v: [f64; 2]) -> [f64; 2] {
        let (c, s) = self.heading;
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }

    pub fn to_world(&self, v: [f64; 2]) -> [f64; 2] {
        let (c, s) = self.heading;
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }
}

/// The per-agent feature `F_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub agent_id: AgentId,
    pub query_frame: FrameIndex,
    pub values: Vec<f64>,
    pub frame: LocalFrame,
}

/// Future positions relative to the query position, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub offsets: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl GroundTruth {
    /// Ground truth for frames `frame+1 ..= frame+tau_f` of `track`,
    /// relative to `reference`.
    pub fn from_track(track: &AgentTrack, frame: FrameIndex, tau_f: usize, reference: Position2) -> Self {
        let mut offsets = Vec::with_capacity(tau_f);
        let mut valid = Vec::with_capacity(tau_f);
        for j in 0..tau_f {
            match track.position_at(frame + 1 + j) {
                Some(p) => {
                    offsets.push([p.x - reference.x, p.y - reference.y]);
                    valid.push(true);
                }
                None => {
                    offsets.push([0.0, 0.0]);
                    valid.push(false);
                }
            }
        }
        Self { offsets, valid }
    }

    pub fn any_valid(&self) -> bool {
        self.valid.iter().any(|&v| v)
    }
}

/// A snapshot forecaster.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastModel {
    Analytic(AnalyticModel),
    Learned(LearnedModel),
}

impl ForecastModel {
    pub fn horizon(&self) -> HorizonConfig {
        match self {
            ForecastModel::Analytic(m) => m.horizon,
            ForecastModel::Learned(m) => m.horizon(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            ForecastModel::Analytic(_) => AnalyticModel::FEATURE_DIM,
            ForecastModel::Learned(m) => m.arch().feature_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            ForecastModel::Analytic(_) => 0,
            ForecastModel::Learned(m) => m.params().len(),
        }
    }

    pub fn encode(&self, window: &HistoryWindow) -> FeatureVector {
        match self {
            ForecastModel::Analytic(m) => m.encode(window),
            ForecastModel::Learned(m) => m.encode(window),
        }
    }

    pub fn decode(&self, feature: &FeatureVector) -> MultiModalPrediction {
        match self {
            ForecastModel::Analytic(m) => m.decode(feature),
            ForecastModel::Learned(m) => m.decode(feature),
        }
    }

    /// The dedicated single-mode trajectory used by single-modal occlusion
    /// reasoning.
    pub fn decode_single(&self, feature: &FeatureVector) -> MovementTrajectory {
        match self {
            ForecastModel::Analytic(m) => m.decode_single(feature),
            ForecastModel::Learned(m) => m.decode_single(feature),
        }
    }

    /// Like [`ForecastModel::encode`], also returning the learned model's
    /// encoder input so the pass can be replayed for gradients.
    pub fn encode_recorded(&self, window: &HistoryWindow) -> (FeatureVector, Option<EncoderInput>) {
        match self {
            ForecastModel::Analytic(m) => (m.encode(window), None),
            ForecastModel::Learned(m) => {
                let input = featurize(window);
                (m.encode_input(window.agent_id, window.frame, &input), Some(input))
            }
        }
    }

    pub fn forecast(&self, window: &HistoryWindow) -> (FeatureVector, MultiModalPrediction) {
        let f = self.encode(window);
        let p = self.decode(&f);
        (f, p)
    }
}
