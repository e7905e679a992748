//! End-to-end presets shared by the command-line tool and the integration
//! tests: suite generation, the three training stages and the ablation grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dfilter::{CovarianceNet, DfConfig, DifferentiableFilter};
use crate::error::{Error, Result};
use crate::forecast::{
    finetune_dataset, pretrain_dataset, train, ForecastModel, LearnedArch, LearnedModel, TrainConfig, TrainReport,
    TrainStage,
};
use crate::metrics::{aggregate, EvaluationRun, MetricsConfig, MetricsReport};
use crate::scenario::{build_schedule, generate_scenario, GeneratorConfig, QuerySchedule, Scenario};
use crate::streamer::{
    run_stream, streaming_train, CvKalmanConfig, OcclusionPolicy, PredictionLog, StreamConfig, StreamTrainConfig,
    StreamTrainReport,
};
use crate::types::HorizonConfig;

/// Everything that parameterizes a run besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: HorizonConfig,
    pub generator: GeneratorConfig,
    pub hidden: usize,
    pub feature_dim: usize,
    /// Frame stride when cutting snapshot datasets.
    pub dataset_stride: usize,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub stream: StreamTrainConfig,
    pub filter: DfConfig,
    pub kalman: CvKalmanConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let horizon = HorizonConfig::default();
        let arch = LearnedArch::for_horizon(&horizon);
        Self {
            horizon,
            generator: GeneratorConfig::default(),
            hidden: arch.hidden,
            feature_dim: arch.feature_dim,
            dataset_stride: 5,
            pretrain: TrainConfig::for_stage(TrainStage::Pretrain),
            finetune: TrainConfig::for_stage(TrainStage::Finetune),
            stream: StreamTrainConfig::default(),
            filter: DfConfig::default(),
            kalman: CvKalmanConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn arch(&self) -> LearnedArch {
        LearnedArch { hidden: self.hidden, feature_dim: self.feature_dim, ..LearnedArch::for_horizon(&self.horizon) }
    }
}

/// Scenarios for seeds `first..first + count`.
pub fn generate_suite(first: u64, count: usize, config: &GeneratorConfig) -> Result<Vec<Scenario>> {
    (first..first + count as u64).map(|s| generate_scenario(s, config)).collect()
}

pub fn pretrain_model(scenarios: &[Scenario], config: &ExperimentConfig, seed: u64) -> Result<(LearnedModel, TrainReport)> {
    let mut model = LearnedModel::new(config.horizon, config.arch(), seed);
    let data = pretrain_dataset(scenarios, &config.horizon, config.dataset_stride);
    let report = train(&mut model, &data, &TrainConfig { seed, ..config.pretrain.clone() })?;
    Ok((model, report))
}

pub fn finetune_model(
    model: &mut LearnedModel,
    scenarios: &[Scenario],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<TrainReport> {
    let data = finetune_dataset(scenarios, &config.horizon, config.dataset_stride);
    train(model, &data, &TrainConfig { seed, ..config.finetune.clone() })
}

/// Builds a fresh filter for `model` and trains its covariance net.
pub fn stream_train_filter(
    model: &ForecastModel,
    scenarios: &[Scenario],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(DifferentiableFilter, StreamTrainReport)> {
    let mut df = DifferentiableFilter::new(model.feature_dim(), config.horizon.tau_f, config.filter, seed);
    let stream = StreamTrainConfig { seed, kalman: config.kalman, ..config.stream };
    let report = streaming_train(model, &mut df, scenarios, &stream)?;
    Ok((df, report))
}

/// Trajectory refinement applied on top of the forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinerKind {
    /// The trained differentiable filter.
    Df,
    None,
    /// The same filter with a fixed observation noise.
    Kf,
}

impl fmt::Display for RefinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefinerKind::Df => "df",
            RefinerKind::None => "none",
            RefinerKind::Kf => "kf",
        })
    }
}

impl FromStr for RefinerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "df" => Ok(RefinerKind::Df),
            "none" => Ok(RefinerKind::None),
            "kf" => Ok(RefinerKind::Kf),
            other => Err(Error::InvalidConfig(format!("unknown refiner '{other}'"))),
        }
    }
}

/// Resolves `kind` into a filter, if any.
pub fn build_refiner(
    kind: RefinerKind,
    model: &ForecastModel,
    trained: Option<&DifferentiableFilter>,
    config: &ExperimentConfig,
) -> Result<Option<DifferentiableFilter>> {
    let tau_f = model.horizon().tau_f;
    match kind {
        RefinerKind::None => Ok(None),
        RefinerKind::Df => {
            let df = trained.ok_or_else(|| Error::InvalidConfig("refiner 'df' needs a stream-trained filter".into()))?;
            if df.tau_f() != tau_f || df.net.feature_dim() != model.feature_dim() {
                return Err(Error::InvalidConfig("filter does not match the forecaster".into()));
            }
            Ok(Some(df.clone()))
        }
        RefinerKind::Kf => {
            let net = CovarianceNet::constant(model.feature_dim(), tau_f, config.filter.hidden, config.filter.init_r);
            Ok(Some(DifferentiableFilter::with_net(net, config.filter)))
        }
    }
}

/// One cell of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub label: &'static str,
    pub policy: OcclusionPolicy,
    pub refiner: RefinerKind,
}

/// Baseline (Kalman fill, no refinement), +OCC, +OCC+DF.
pub const ABLATION_GRID: [GridCell; 3] = [
    GridCell { label: "baseline", policy: OcclusionPolicy::KalmanBaseline, refiner: RefinerKind::None },
    GridCell { label: "occ", policy: OcclusionPolicy::MultiModal, refiner: RefinerKind::None },
    GridCell { label: "occ+df", policy: OcclusionPolicy::MultiModal, refiner: RefinerKind::Df },
];

/// A streamed suite: scenarios with their schedules and prediction logs.
#[derive(Debug, Clone)]
pub struct StreamedSuite {
    pub schedules: Vec<QuerySchedule>,
    pub logs: Vec<PredictionLog>,
}

impl StreamedSuite {
    pub fn runs<'a>(&'a self, scenarios: &'a [Scenario]) -> Vec<EvaluationRun<'a>> {
        scenarios
            .iter()
            .zip(&self.schedules)
            .zip(&self.logs)
            .map(|((scenario, schedule), log)| EvaluationRun { scenario, schedule, log })
            .collect()
    }

    pub fn report(&self, scenarios: &[Scenario], metrics: &MetricsConfig) -> Result<MetricsReport> {
        aggregate(&self.runs(scenarios), metrics)
    }
}

pub fn stream_suite(
    scenarios: &[Scenario],
    model: &ForecastModel,
    policy: OcclusionPolicy,
    refiner: Option<&DifferentiableFilter>,
    kalman: CvKalmanConfig,
) -> Result<StreamedSuite> {
    let horizon = model.horizon();
    let mut schedules = Vec::with_capacity(scenarios.len());
    let mut logs = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let schedule = build_schedule(s, &horizon);
        let config = StreamConfig { model, policy, refiner, lane_map: &s.lane_map, kalman, record_inputs: false };
        logs.push(run_stream(s, &schedule, &config)?);
        schedules.push(schedule);
    }
    Ok(StreamedSuite { schedules, logs })
}
