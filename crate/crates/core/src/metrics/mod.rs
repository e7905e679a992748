//! Masked streaming metrics: minFDE, minADE and miss rate over visible
//! ground truth, the four-subset breakdown, and trajectory fluctuation
//! between adjacent frames.

mod report;

pub use report::{
    parse_report_csv, render_fluctuation_csv, render_report_csv, render_report_text, report_rows, ReportRow, REPORT_COLUMNS,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{AgentTrack, QuerySchedule, Scenario, Subset};
use crate::streamer::{PredictionLog, PredictionRecord};
use crate::types::{AgentId, FrameIndex, MultiModalPrediction, Position2};

pub const DEFAULT_MR_THRESHOLD_M: f64 = 2.0;

/// Absolute future positions for frames `t+1 ..= t+tau_f`; `None` where the
/// agent is invisible or gone.
#[derive(Debug, Clone, PartialEq)]
pub struct FutureTruth {
    pub positions: Vec<Option<Position2>>,
}

impl FutureTruth {
    pub fn from_track(track: &AgentTrack, frame: FrameIndex, tau_f: usize) -> Self {
        Self { positions: (1..=tau_f).map(|j| track.position_at(frame + j)).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FluctuationNorm {
    /// Mean of per-frame distances.
    #[default]
    PerFrameMean,
    /// Norm of the stacked differences divided by the overlap length.
    StackedNorm,
}

/// Which trajectories of a log are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionSource {
    Raw,
    /// Refined when present, raw otherwise.
    #[default]
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Number of top-confidence modes for the multi-mode columns.
    pub k_eval: usize,
    pub mr_threshold: f64,
    pub fluctuation_norm: FluctuationNorm,
    pub source: PredictionSource,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            k_eval: 6,
            mr_threshold: DEFAULT_MR_THRESHOLD_M,
            fluctuation_norm: FluctuationNorm::PerFrameMean,
            source: PredictionSource::Final,
        }
    }
}

fn top_modes(prediction: &MultiModalPrediction, k_eval: usize) -> Vec<usize> {
    let mut ranked = prediction.ranked_modes();
    ranked.truncate(k_eval.max(1));
    ranked
}

/// Minimum endpoint error over the `k_eval` most confident modes; `None`
/// when the endpoint has no ground truth.
pub fn min_fde(prediction: &MultiModalPrediction, origin: Position2, gt: &FutureTruth, k_eval: usize) -> Option<f64> {
    let end = (*gt.positions.last()?)?;
    top_modes(prediction, k_eval)
        .into_iter()
        .map(|k| prediction.modes()[k].to_absolute(origin).last().expect("non-empty mode").distance(&end))
        .min_by(f64::total_cmp)
}

/// Minimum over the `k_eval` most confident modes of the displacement
/// averaged over frames with ground truth; `None` when no frame has any.
pub fn min_ade(prediction: &MultiModalPrediction, origin: Position2, gt: &FutureTruth, k_eval: usize) -> Option<f64> {
    if gt.positions.iter().all(Option::is_none) {
        return None;
    }
    top_modes(prediction, k_eval)
        .into_iter()
        .map(|k| {
            let abs = prediction.modes()[k].to_absolute(origin);
            let (sum, n) = abs
                .iter()
                .zip(&gt.positions)
                .filter_map(|(p, g)| g.map(|g| p.distance(&g)))
                .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
            sum / n as f64
        })
        .min_by(f64::total_cmp)
}

/// Fraction of defined minFDE values above `threshold`; `None` if there are none.
pub fn miss_rate(min_fdes: &[Option<f64>], threshold: f64) -> Option<f64> {
    let defined: Vec<f64> = min_fdes.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().filter(|&&d| d > threshold).count() as f64 / defined.len() as f64)
}

/// Disagreement between the most confident trajectories predicted at
/// `t-1` and `t` over the frames both cover, in meters per frame.
pub fn fluctuation(
    previous: &MultiModalPrediction,
    previous_origin: Position2,
    current: &MultiModalPrediction,
    current_origin: Position2,
    norm: FluctuationNorm,
) -> f64 {
    let a = previous.modes()[previous.most_confident()].to_absolute(previous_origin);
    let b = current.modes()[current.most_confident()].to_absolute(current_origin);
    // a[j] is frame t+j, b[j] is frame t+1+j.
    let overlap = a.len().min(b.len() + 1).saturating_sub(1);
    if overlap == 0 {
        return 0.0;
    }
    let dists: Vec<f64> = (0..overlap).map(|j| a[j + 1].distance(&b[j])).collect();
    match norm {
        FluctuationNorm::PerFrameMean => dists.iter().sum::<f64>() / overlap as f64,
        FluctuationNorm::StackedNorm => dists.iter().map(|d| d * d).sum::<f64>().sqrt() / overlap as f64,
    }
}

/// Per-query values for the multi-mode (`k`) and single-mode (`one`) columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub frame: FrameIndex,
    pub agent_id: AgentId,
    pub subset: Subset,
    pub fde_k: Option<f64>,
    pub ade_k: Option<f64>,
    pub fde_1: Option<f64>,
    pub ade_1: Option<f64>,
    /// Against the same agent's prediction at the previous frame, if logged.
    pub fluctuation: Option<f64>,
}

fn pick(record: &PredictionRecord, source: PredictionSource) -> &MultiModalPrediction {
    match source {
        PredictionSource::Raw => &record.raw,
        PredictionSource::Final => record.final_prediction(),
    }
}

/// Scores every scheduled query of one scenario.
pub fn evaluate_queries(
    scenario: &Scenario,
    schedule: &QuerySchedule,
    log: &PredictionLog,
    config: &MetricsConfig,
) -> Result<Vec<QueryMetrics>> {
    let mut out = Vec::with_capacity(schedule.len());
    for q in &schedule.queries {
        let record = log.get(q.frame, q.agent_id).ok_or(Error::MissingQuery { frame: q.frame, agent: q.agent_id })?;
        let track = scenario
            .track(q.agent_id)
            .ok_or_else(|| Error::InvalidInput(format!("schedule names unknown agent {}", q.agent_id)))?;
        let pred = pick(record, config.source);
        let gt = FutureTruth::from_track(track, q.frame, log.tau_f);
        let fluct = q
            .frame
            .checked_sub(1)
            .and_then(|f| log.get(f, q.agent_id))
            .map(|prev| fluctuation(pick(prev, config.source), prev.origin, pred, record.origin, config.fluctuation_norm));
        out.push(QueryMetrics {
            frame: q.frame,
            agent_id: q.agent_id,
            subset: q.subset,
            fde_k: min_fde(pred, record.origin, &gt, config.k_eval),
            ade_k: min_ade(pred, record.origin, &gt, config.k_eval),
            fde_1: min_fde(pred, record.origin, &gt, 1),
            ade_1: min_ade(pred, record.origin, &gt, 1),
            fluctuation: fluct,
        });
    }
    Ok(out)
}

/// minFDE, minADE and miss rate; `None` where nothing was defined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricValues {
    pub min_fde: Option<f64>,
    pub min_ade: Option<f64>,
    pub miss_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetMetrics {
    pub subset: Subset,
    pub queries: usize,
    pub agents: usize,
    pub k: MetricValues,
    pub one: MetricValues,
    pub fluctuation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub k_eval: usize,
    pub mr_threshold: f64,
    pub queries: usize,
    /// Distinct agents over all subsets.
    pub agents: usize,
    pub subsets: Vec<SubsetMetrics>,
    pub overall_k: MetricValues,
    pub overall_one: MetricValues,
    pub overall_fluctuation: Option<f64>,
}

/// Per-agent mean over defined values, then mean over agents.
fn nested_mean<'a>(values: impl Iterator<Item = (&'a (usize, AgentId), Option<f64>)>) -> Option<f64> {
    let mut per_agent: BTreeMap<(usize, AgentId), (f64, usize)> = BTreeMap::new();
    for (agent, v) in values {
        if let Some(v) = v {
            let e = per_agent.entry(*agent).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    (!per_agent.is_empty()).then(|| per_agent.values().map(|(s, n)| s / *n as f64).sum::<f64>() / per_agent.len() as f64)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Averages per agent over its queries, then per subset over agents, then
/// over the subsets. `queries[i].0` identifies the scenario so agents from
/// different scenarios stay distinct. Subsets without any defined value
/// are left out of the overall mean.
pub fn aggregate_queries(queries: &[(usize, QueryMetrics)], config: &MetricsConfig) -> MetricsReport {
    let thr = config.mr_threshold;
    let miss = |v: Option<f64>| v.map(|d| if d > thr { 1.0 } else { 0.0 });
    let mut subsets = Vec::with_capacity(4);
    for subset in Subset::ALL {
        let rows: Vec<((usize, AgentId), &QueryMetrics)> =
            queries.iter().filter(|(_, q)| q.subset == subset).map(|(s, q)| ((*s, q.agent_id), q)).collect();
        let agents: BTreeSet<_> = rows.iter().map(|(a, _)| *a).collect();
        let col = |f: &dyn Fn(&QueryMetrics) -> Option<f64>| nested_mean(rows.iter().map(|(a, q)| (a, f(q))));
        subsets.push(SubsetMetrics {
            subset,
            queries: rows.len(),
            agents: agents.len(),
            k: MetricValues {
                min_fde: col(&|q| q.fde_k),
                min_ade: col(&|q| q.ade_k),
                miss_rate: col(&|q| miss(q.fde_k)),
            },
            one: MetricValues {
                min_fde: col(&|q| q.fde_1),
                min_ade: col(&|q| q.ade_1),
                miss_rate: col(&|q| miss(q.fde_1)),
            },
            fluctuation: col(&|q| q.fluctuation),
        });
    }
    let overall = |f: &dyn Fn(&SubsetMetrics) -> Option<f64>| mean_defined(subsets.iter().map(f));
    let distinct: BTreeSet<(usize, AgentId)> = queries.iter().map(|(s, q)| (*s, q.agent_id)).collect();
    MetricsReport {
        k_eval: config.k_eval,
        mr_threshold: thr,
        queries: queries.len(),
        agents: distinct.len(),
        overall_k: MetricValues {
            min_fde: overall(&|s| s.k.min_fde),
            min_ade: overall(&|s| s.k.min_ade),
            miss_rate: overall(&|s| s.k.miss_rate),
        },
        overall_one: MetricValues {
            min_fde: overall(&|s| s.one.min_fde),
            min_ade: overall(&|s| s.one.min_ade),
            miss_rate: overall(&|s| s.one.miss_rate),
        },
        overall_fluctuation: overall(&|s| s.fluctuation),
        subsets,
    }
}

/// One scenario's inputs to [`aggregate`].
#[derive(Debug, Clone, Copy)]
pub struct EvaluationRun<'a> {
    pub scenario: &'a Scenario,
    pub schedule: &'a QuerySchedule,
    pub log: &'a PredictionLog,
}

pub fn aggregate(runs: &[EvaluationRun], config: &MetricsConfig) -> Result<MetricsReport> {
    let mut all = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        all.extend(evaluate_queries(run.scenario, run.schedule, run.log, config)?.into_iter().map(|q| (i, q)));
    }
    Ok(aggregate_queries(&all, config))
}
