//! Streaming training of the filter's covariance net over short windows of
//! adjacent frames.
//!
//! Each window starts from the filter states of a detached streaming run and
//! is unrolled with the current parameters; the loss is the smooth-L1
//! winner-takes-all regression of the refined trajectories. Forecaster
//! inputs inside a window are fixed, so gradients stop at the window start.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{step, CvKalmanConfig, OcclusionPolicy, StreamConfig, StreamState};
use crate::dfilter::{AgentFilter, AgentFilterGrad, DifferentiableFilter, RefineTape};
use crate::error::{Error, Result};
use crate::forecast::loss::{best_mode, regression_loss_grad};
use crate::forecast::{EncoderInput, ForecastModel, GroundTruth, LearnedForward, LearnedGrad, LearnedModel};
use crate::nn::{clip_grad_norm, AdamW};
use crate::scenario::Scenario;
use crate::types::{AgentId, MovementTrajectory, MultiModalPrediction};

/// One agent at one frame of a training window.
#[derive(Debug, Clone)]
pub struct WindowAgent {
    pub agent_id: AgentId,
    pub occluded: bool,
    pub feature: Vec<f64>,
    pub raw_modes: Vec<Vec<[f64; 2]>>,
    pub confidences: Vec<f64>,
    /// Learned encoder input, when the forecaster is a learned model.
    pub input: Option<EncoderInput>,
    /// Future positions relative to the agent's (possibly filled-in) position.
    pub gt: GroundTruth,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingWindow {
    /// Filter states before the first frame; agents missing here are born
    /// inside the window.
    pub initial: BTreeMap<AgentId, AgentFilter>,
    pub frames: Vec<Vec<WindowAgent>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub window: usize,
    pub windows_per_step: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub policy: OcclusionPolicy,
    pub kalman: CvKalmanConfig,
}

impl Default for StreamTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            lr: 1e-4,
            weight_decay: 1e-4,
            window: 5,
            windows_per_step: 1,
            grad_clip: 10.0,
            seed: 0,
            policy: OcclusionPolicy::MultiModal,
            kalman: CvKalmanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamTrainReport {
    /// Mean window loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Loss of every optimizer step, before the step.
    pub step_losses: Vec<f64>,
}

/// Replays `scenario` with `refiner` attached and cuts the run into
/// windows of `len` frames.
pub fn collect_windows(scenario: &Scenario, config: &StreamConfig, len: usize) -> Result<Vec<TrainingWindow>> {
    let df = config.refiner.ok_or_else(|| Error::InvalidConfig("window collection needs a filter".into()))?;
    let tau_f = df.tau_f();
    let mut state = StreamState::default();
    let mut windows = Vec::new();
    let mut current = TrainingWindow::default();
    for frame in 0..scenario.duration {
        if current.frames.is_empty() {
            current.initial =
                state.agents.iter().filter_map(|(id, a)| a.filter.clone().map(|f| (*id, f))).collect();
        }
        let preds = step(&mut state, &scenario.observation_set(frame), config)?;
        let agents = preds
            .into_iter()
            .filter_map(|p| {
                let track = scenario.track(p.agent_id)?;
                Some(WindowAgent {
                    agent_id: p.agent_id,
                    occluded: !p.visible,
                    feature: p.feature.values,
                    raw_modes: p.raw.modes().iter().map(|m| m.steps().to_vec()).collect(),
                    confidences: p.raw.confidences().to_vec(),
                    input: p.input,
                    gt: GroundTruth::from_track(track, frame, tau_f, p.position),
                })
            })
            .collect();
        current.frames.push(agents);
        if current.frames.len() == len {
            windows.push(std::mem::take(&mut current));
        }
    }
    if !current.frames.is_empty() {
        windows.push(current);
    }
    Ok(windows)
}

struct Entry {
    agent_id: AgentId,
    tape: RefineTape,
    g_refined: Vec<Vec<[f64; 2]>>,
    forward: Option<LearnedForward>,
}

/// Mean smooth-L1 regression of the best refined mode over every agent
/// frame of `window` with ground truth. Gradients accumulate into `grad_df`
/// (filter net parameters) and, when `model` is given, into `grad_model`;
/// with a model the raw predictions are recomputed from the recorded
/// encoder inputs.
pub fn window_loss_grad(
    df: &DifferentiableFilter,
    model: Option<&LearnedModel>,
    window: &TrainingWindow,
    grad_df: &mut [f64],
    mut grad_model: Option<&mut [f64]>,
) -> Result<f64> {
    let mut states = window.initial.clone();
    let mut entries: Vec<Vec<Entry>> = Vec::with_capacity(window.frames.len());
    let mut total = 0.0;
    let mut terms = 0usize;
    for frame in &window.frames {
        let mut row = Vec::with_capacity(frame.len());
        for a in frame {
            let (forward, modes, confidences, feature) = match (model, &a.input) {
                (Some(m), Some(input)) => {
                    let f = m.forward(input);
                    let (modes, probs, feat) = (f.modes.clone(), f.probs.clone(), f.feature.clone());
                    (Some(f), modes, probs, feat)
                }
                (Some(_), None) => return Err(Error::InvalidInput("window lacks encoder inputs".into())),
                _ => (None, a.raw_modes.clone(), a.confidences.clone(), a.feature.clone()),
            };
            let raw = MultiModalPrediction::new(
                a.agent_id,
                0,
                modes.into_iter().map(MovementTrajectory::new).collect::<Result<Vec<_>>>()?,
                confidences,
            )?;
            let (refined, state, tape) = df.refine_recorded(&raw, &feature, a.occluded, states.get(&a.agent_id))?;
            states.insert(a.agent_id, state);
            let steps: Vec<Vec<[f64; 2]>> = refined.modes().iter().map(|m| m.steps().to_vec()).collect();
            let mut g_refined = vec![vec![[0.0, 0.0]; df.tau_f()]; steps.len()];
            if a.gt.any_valid() {
                let best = best_mode(&steps, &a.gt);
                let (l, g) = regression_loss_grad(&steps[best], &a.gt);
                total += l;
                terms += 1;
                g_refined[best] = g;
            }
            row.push(Entry { agent_id: a.agent_id, tape, g_refined, forward });
        }
        entries.push(row);
    }
    if terms == 0 {
        return Ok(0.0);
    }
    let scale = 1.0 / terms as f64;
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("window loss {loss}")));
    }
    let mut carried: BTreeMap<AgentId, AgentFilterGrad> = BTreeMap::new();
    for row in entries.iter().rev() {
        for e in row {
            let g: Vec<Vec<[f64; 2]>> =
                e.g_refined.iter().map(|m| m.iter().map(|v| [v[0] * scale, v[1] * scale]).collect()).collect();
            let rg = df.refine_backward(&e.tape, &g, carried.get(&e.agent_id), grad_df);
            match rg.previous {
                Some(p) => carried.insert(e.agent_id, p),
                None => carried.remove(&e.agent_id),
            };
            if let (Some(m), Some(f), Some(gm)) = (model, &e.forward, grad_model.as_deref_mut()) {
                let upstream =
                    LearnedGrad { modes: Some(rg.raw_modes), feature: Some(rg.feature), ..LearnedGrad::default() };
                m.backward(f, &upstream, gm);
            }
        }
    }
    Ok(loss)
}

/// Trains the covariance net of `df` with the forecaster frozen.
pub fn streaming_train(
    model: &ForecastModel,
    df: &mut DifferentiableFilter,
    scenarios: &[Scenario],
    config: &StreamTrainConfig,
) -> Result<StreamTrainReport> {
    if config.window == 0 || config.windows_per_step == 0 {
        return Err(Error::InvalidConfig("window and windows_per_step must be positive".into()));
    }
    let mut report = StreamTrainReport::default();
    let n = df.net.params().len();
    let mut opt = AdamW::new(n, config.lr, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..scenarios.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut epoch_steps = 0usize;
        for &si in &order {
            let scenario = &scenarios[si];
            let frozen = df.clone();
            let stream = StreamConfig {
                model,
                policy: config.policy,
                refiner: Some(&frozen),
                lane_map: &scenario.lane_map,
                kalman: config.kalman,
                record_inputs: false,
            };
            let windows = collect_windows(scenario, &stream, config.window)?;
            for chunk in windows.chunks(config.windows_per_step) {
                let mut grads = vec![0.0; n];
                let mut loss = 0.0;
                for w in chunk {
                    let mut g = vec![0.0; n];
                    loss += window_loss_grad(df, None, w, &mut g, None)? / chunk.len() as f64;
                    grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b / chunk.len() as f64);
                }
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss(format!("streaming loss {loss}")));
                }
                clip_grad_norm(&mut grads, config.grad_clip);
                opt.step(df.net.params_mut(), &grads);
                report.step_losses.push(loss);
                epoch_total += loss;
                epoch_steps += 1;
            }
        }
        if epoch_steps > 0 {
            report.loss_curve.push(epoch_total / epoch_steps as f64);
        }
    }
    Ok(report)
}
