//! Snapshot datasets and the pretrain / finetune training loops.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learned::{featurize, EncoderInput, LearnedGrad, LearnedModel};
use super::loss::{regression_loss_grad, wta_loss_grad, LossWeights};
use super::{GroundTruth, HistoryWindow};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamW};
use crate::scenario::{AgentTrack, Scenario};
use crate::types::{FrameIndex, HorizonConfig, Position2};

/// Frames per finetuning group.
pub const ADJACENT_FRAMES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSample {
    pub input: EncoderInput,
    pub gt: GroundTruth,
    /// Samples sharing a group are always placed in the same minibatch.
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainStage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Weight of the single-mode head's regression term.
    pub single_weight: f64,
    pub grad_clip: f64,
}

impl TrainConfig {
    pub fn for_stage(stage: TrainStage) -> Self {
        let (epochs, lr) = match stage {
            TrainStage::Pretrain => (24, 5e-4),
            TrainStage::Finetune => (8, 1e-4),
        };
        Self {
            epochs,
            lr,
            weight_decay: 1e-4,
            batch_size: 20,
            seed: 0,
            weights: LossWeights::default(),
            single_weight: 1.0,
            grad_clip: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Window of `tau_h` positions ending at `frame`, with hidden slots filled
/// from ground truth: linear interpolation between the surrounding visible
/// positions, holding the last one when nothing follows, and padding
/// before the first record by repeating the earliest visible position.
pub fn oracle_history(track: &AgentTrack, frame: FrameIndex, tau_h: usize) -> Option<Vec<Position2>> {
    let first_visible = track.positions.iter().flatten().next().copied()?;
    let mut out = Vec::with_capacity(tau_h);
    for f in (frame + 1).saturating_sub(tau_h)..=frame {
        let p = match track.entry(f) {
            None => first_visible,
            Some(Some(p)) => p,
            Some(None) => {
                let i = f - track.start_frame;
                let prev = track.positions[..i].iter().enumerate().rev().find_map(|(j, p)| p.map(|p| (j, p)));
                let next = track.positions[i + 1..].iter().enumerate().find_map(|(j, p)| p.map(|p| (i + 1 + j, p)));
                match (prev, next) {
                    (Some((a, pa)), Some((b, pb))) => {
                        let u = (i - a) as f64 / (b - a) as f64;
                        Position2::new(pa.x + u * (pb.x - pa.x), pa.y + u * (pb.y - pa.y))
                    }
                    (Some((_, pa)), None) => pa,
                    (None, Some((_, pb))) => pb,
                    (None, None) => unreachable!("track has a visible position"),
                }
            }
        };
        out.push(p);
    }
    while out.len() < tau_h {
        out.insert(0, out[0]);
    }
    Some(out)
}

fn samples_at(scenario: &Scenario, frame: FrameIndex, horizon: &HorizonConfig, targets: &[usize], group_of: &mut dyn FnMut(usize) -> usize, out: &mut Vec<SnapshotSample>) {
    let active: Vec<(usize, Vec<Position2>)> = scenario
        .tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_active(frame))
        .filter_map(|(i, t)| oracle_history(t, frame, horizon.tau_h).map(|h| (i, h)))
        .collect();
    for &ti in targets {
        let track = &scenario.tracks[ti];
        let Some(cur) = track.position_at(frame) else { continue };
        let Some((_, hist)) = active.iter().find(|(i, _)| *i == ti) else { continue };
        let gt = GroundTruth::from_track(track, frame, horizon.tau_f, cur);
        if !gt.any_valid() {
            continue;
        }
        let neighbors = active.iter().filter(|(i, _)| *i != ti).map(|(_, h)| h.as_slice()).collect();
        let window = HistoryWindow { agent_id: track.agent_id, frame, target: hist, neighbors, lane_map: &scenario.lane_map };
        out.push(SnapshotSample { input: featurize(&window), gt, group: group_of(ti) });
    }
}

/// Independent snapshots from every `stride`-th frame of each scenario.
pub fn pretrain_dataset(scenarios: &[Scenario], horizon: &HorizonConfig, stride: usize) -> Vec<SnapshotSample> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut next_group = 0usize;
    for s in scenarios {
        for frame in (1..s.duration).step_by(stride) {
            let targets: Vec<usize> = (0..s.tracks.len()).filter(|&i| s.tracks[i].visible_at(frame)).collect();
            samples_at(s, frame, horizon, &targets, &mut |_| {
                next_group += 1;
                next_group - 1
            }, &mut out);
        }
    }
    out
}

/// Groups of [`ADJACENT_FRAMES`] consecutive visible frames per agent,
/// starting every `stride` frames from `tau_h`.
pub fn finetune_dataset(scenarios: &[Scenario], horizon: &HorizonConfig, stride: usize) -> Vec<SnapshotSample> {
    let stride = stride.max(ADJACENT_FRAMES);
    let mut out = Vec::new();
    let mut group_base = 0usize;
    for s in scenarios {
        let mut start = horizon.tau_h;
        while start + ADJACENT_FRAMES <= s.duration {
            let targets: Vec<usize> = (0..s.tracks.len())
                .filter(|&i| (start..start + ADJACENT_FRAMES).all(|f| s.tracks[i].visible_at(f)))
                .collect();
            for frame in start..start + ADJACENT_FRAMES {
                let base = group_base;
                samples_at(s, frame, horizon, &targets, &mut |ti| base + ti, &mut out);
            }
            group_base += s.tracks.len();
            start += stride;
        }
    }
    out
}

pub(crate) fn sample_loss_grad(
    model: &LearnedModel,
    sample: &SnapshotSample,
    config: &TrainConfig,
    grads: Option<&mut [f64]>,
) -> f64 {
    let fwd = model.forward(&sample.input);
    let (wta, g) = wta_loss_grad(&fwd.modes, &fwd.probs, &sample.gt, &config.weights);
    let (single, g_single) = regression_loss_grad(&fwd.single_steps, &sample.gt);
    if let Some(grads) = grads {
        let upstream = LearnedGrad {
            modes: Some(g.modes),
            logits: Some(g.logits),
            single_steps: Some(g_single.into_iter().map(|v| [v[0] * config.single_weight, v[1] * config.single_weight]).collect()),
            feature: None,
        };
        model.backward(&fwd, &upstream, grads);
    }
    wta.total + config.single_weight * single
}

/// Minimizes the winner-takes-all loss (plus the single-mode head's
/// regression) with AdamW. Deterministic given `config.seed`.
pub fn train(model: &mut LearnedModel, dataset: &[SnapshotSample], config: &TrainConfig) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    {
        let mut ids: Vec<usize> = dataset.iter().map(|s| s.group).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut index = std::collections::HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            index.insert(*id, i);
        }
        groups.resize(ids.len(), Vec::new());
        for (i, s) in dataset.iter().enumerate() {
            groups[index[&s.group]].push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(model.params().len(), config.lr, config.weight_decay);
    let mut report = TrainReport::default();
    let mut grads = vec![0.0; model.params().len()];
    for epoch in 0..config.epochs {
        groups.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batch: Vec<usize> = Vec::with_capacity(config.batch_size);
        let mut gi = 0;
        while gi < groups.len() {
            batch.clear();
            while gi < groups.len() && (batch.is_empty() || batch.len() + groups[gi].len() <= config.batch_size) {
                batch.extend(&groups[gi]);
                gi += 1;
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in &batch {
                batch_loss += sample_loss_grad(model, &dataset[i], config, Some(&mut grads));
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!("epoch {epoch}, batch ending at group {gi}")));
            }
            epoch_loss += batch_loss;
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            clip_grad_norm(&mut grads, config.grad_clip);
            opt.step(model.params_mut(), &grads);
        }
        report.loss_curve.push(epoch_loss / dataset.len() as f64);
    }
    Ok(report)
}
