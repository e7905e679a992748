//! Frame-by-frame replay: keeps per-agent history buffers, fills occluded
//! agents' positions, forecasts every active agent on every frame and
//! optionally refines the forecasts with a differentiable filter.

mod cv_kalman;
mod log;
mod train;

pub use cv_kalman::{CvKalman, CvKalmanConfig};
pub use log::{parse_prediction_log, read_prediction_log, render_prediction_log, write_prediction_log, PredictionLog, PredictionRecord};
pub use train::{collect_windows, streaming_train, window_loss_grad, StreamTrainConfig, StreamTrainReport, TrainingWindow, WindowAgent};

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dfilter::{AgentFilter, DifferentiableFilter};
use crate::error::{Error, Result};
use crate::forecast::{EncoderInput, FeatureVector, ForecastModel, HistoryWindow};
use crate::scenario::{QuerySchedule, Scenario};
use crate::types::{AgentId, FrameIndex, LaneMap, MovementTrajectory, MultiModalPrediction, ObservationSet, Position2};

/// How an occluded agent's current position is filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OcclusionPolicy {
    /// Previous position plus the first step of the previous frame's most
    /// confident mode.
    MultiModal,
    /// Previous position plus the first step of the dedicated single-mode head.
    SingleModal,
    /// Constant-velocity Kalman filter prediction.
    KalmanBaseline,
}

impl fmt::Display for OcclusionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OcclusionPolicy::MultiModal => "multi",
            OcclusionPolicy::SingleModal => "single",
            OcclusionPolicy::KalmanBaseline => "kf",
        })
    }
}

impl FromStr for OcclusionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi" => Ok(OcclusionPolicy::MultiModal),
            "single" => Ok(OcclusionPolicy::SingleModal),
            "kf" => Ok(OcclusionPolicy::KalmanBaseline),
            other => Err(Error::InvalidConfig(format!("unknown occlusion policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub position: Position2,
    pub hallucinated: bool,
}

#[derive(Debug, Clone)]
pub struct AgentStream {
    pub history: VecDeque<HistoryEntry>,
    /// Final (refined when a filter is attached) prediction of the last frame.
    pub last_prediction: Option<MultiModalPrediction>,
    pub last_single: Option<MovementTrajectory>,
    pub occlusion_run: usize,
    pub kalman: CvKalman,
    pub filter: Option<AgentFilter>,
}

impl AgentStream {
    pub fn current(&self) -> HistoryEntry {
        *self.history.back().expect("agents hold at least one entry")
    }

    /// The last `tau_h` positions, padded at the front with the earliest one.
    pub fn padded_history(&self, tau_h: usize) -> Vec<Position2> {
        let first = self.history.front().expect("agents hold at least one entry").position;
        let pad = tau_h.saturating_sub(self.history.len());
        std::iter::repeat_n(first, pad).chain(self.history.iter().map(|e| e.position)).collect()
    }
}

/// Everything the streamer carries between frames.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    pub frame: Option<FrameIndex>,
    pub agents: BTreeMap<AgentId, AgentStream>,
}

/// Fixed inputs of a stream run.
#[derive(Debug, Clone, Copy)]
pub struct StreamConfig<'a> {
    pub model: &'a ForecastModel,
    pub policy: OcclusionPolicy,
    pub refiner: Option<&'a DifferentiableFilter>,
    pub lane_map: &'a LaneMap,
    pub kalman: CvKalmanConfig,
    /// Keep the learned encoder inputs in the step output.
    pub record_inputs: bool,
}

/// One agent's forecast at one frame.
#[derive(Debug, Clone)]
pub struct AgentPrediction {
    pub agent_id: AgentId,
    pub frame: FrameIndex,
    pub visible: bool,
    /// Observed or filled-in current position; the trajectories start here.
    pub position: Position2,
    pub feature: FeatureVector,
    pub raw: MultiModalPrediction,
    pub refined: Option<MultiModalPrediction>,
    pub input: Option<EncoderInput>,
}

impl AgentPrediction {
    pub fn final_prediction(&self) -> &MultiModalPrediction {
        self.refined.as_ref().unwrap_or(&self.raw)
    }
}

fn fill_position(agent: &AgentStream, policy: OcclusionPolicy) -> Position2 {
    let prev = agent.current().position;
    let step = match policy {
        OcclusionPolicy::MultiModal => agent.last_prediction.as_ref().map(|p| p.modes()[p.most_confident()].steps()[0]),
        OcclusionPolicy::SingleModal => agent.last_single.as_ref().map(|s| s.steps()[0]),
        OcclusionPolicy::KalmanBaseline => return agent.kalman.position(),
    };
    match step {
        Some(s) => prev.offset(s[0], s[1]),
        None => agent.kalman.position(),
    }
}

/// Advances the stream by one frame and forecasts every active agent.
pub fn step(state: &mut StreamState, input: &ObservationSet, config: &StreamConfig) -> Result<Vec<AgentPrediction>> {
    if let Some(last) = state.frame {
        if input.frame <= last {
            return Err(Error::FrameRegression { last, got: input.frame });
        }
    }
    let horizon = config.model.horizon();
    if let Some(df) = config.refiner {
        if df.tau_f() != horizon.tau_f {
            return Err(Error::InvalidConfig(format!("filter horizon {} != model horizon {}", df.tau_f(), horizon.tau_f)));
        }
    }
    state.frame = Some(input.frame);
    // Oracle life-cycle: agents absent from the input have left for good.
    state.agents.retain(|id, _| input.observations.contains_key(id));

    let mut visible = BTreeMap::new();
    for (id, obs) in &input.observations {
        let seen = obs.position();
        visible.insert(*id, seen.is_some());
        match (state.agents.get_mut(id), seen) {
            (Some(agent), Some(p)) => {
                agent.kalman.predict();
                agent.kalman.update(p);
                agent.history.push_back(HistoryEntry { position: p, hallucinated: false });
                agent.occlusion_run = 0;
            }
            (Some(agent), None) => {
                agent.kalman.predict();
                let p = fill_position(agent, config.policy);
                agent.history.push_back(HistoryEntry { position: p, hallucinated: true });
                agent.occlusion_run += 1;
            }
            (None, Some(p)) => {
                let mut history = VecDeque::with_capacity(horizon.tau_h + 1);
                history.push_back(HistoryEntry { position: p, hallucinated: false });
                state.agents.insert(
                    *id,
                    AgentStream {
                        history,
                        last_prediction: None,
                        last_single: None,
                        occlusion_run: 0,
                        kalman: CvKalman::new(config.kalman, p),
                        filter: None,
                    },
                );
            }
            // Never seen: nothing to anchor a forecast on yet.
            (None, None) => {}
        }
        if let Some(agent) = state.agents.get_mut(id) {
            while agent.history.len() > horizon.tau_h {
                agent.history.pop_front();
            }
        }
    }

    let ids: Vec<AgentId> = state.agents.keys().copied().collect();
    let histories: Vec<Vec<Position2>> = ids.iter().map(|id| state.agents[id].padded_history(horizon.tau_h)).collect();
    let mut out = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let window = HistoryWindow {
            agent_id: *id,
            frame: input.frame,
            target: &histories[i],
            neighbors: histories.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, h)| h.as_slice()).collect(),
            lane_map: config.lane_map,
        };
        let (feature, enc_input) = if config.record_inputs {
            config.model.encode_recorded(&window)
        } else {
            (config.model.encode(&window), None)
        };
        let raw = config.model.decode(&feature);
        let agent = state.agents.get_mut(id).expect("listed above");
        let is_visible = visible[id];
        let refined = match config.refiner {
            Some(df) => {
                let (refined, filter) = df.refine(&raw, &feature.values, !is_visible, agent.filter.as_ref())?;
                agent.filter = Some(filter);
                Some(refined)
            }
            None => None,
        };
        if config.policy == OcclusionPolicy::SingleModal {
            agent.last_single = Some(config.model.decode_single(&feature));
        }
        agent.last_prediction = Some(refined.clone().unwrap_or_else(|| raw.clone()));
        out.push(AgentPrediction {
            agent_id: *id,
            frame: input.frame,
            visible: is_visible,
            position: agent.current().position,
            feature,
            raw,
            refined,
            input: enc_input,
        });
    }
    Ok(out)
}

/// Replays `scenario` and logs the prediction of every scheduled query.
pub fn run_stream(scenario: &Scenario, schedule: &QuerySchedule, config: &StreamConfig) -> Result<PredictionLog> {
    let horizon = config.model.horizon();
    let mut state = StreamState::default();
    let mut log = PredictionLog::new(horizon.tau_f);
    for frame in 0..scenario.duration {
        let preds = step(&mut state, &scenario.observation_set(frame), config)?;
        for p in preds {
            if let Some(q) = schedule.get(frame, p.agent_id) {
                log.records.push(PredictionRecord {
                    frame,
                    agent_id: p.agent_id,
                    subset: q.subset,
                    origin: p.position,
                    raw: p.raw,
                    refined: p.refined,
                });
            }
        }
    }
    Ok(log)
}
