//! Golden files recorded from the implementation. Set `UPDATE_GOLDEN=1` to
//! rewrite them after an intended behavior change.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use streamcast::experiment::{
    finetune_model, generate_suite, pretrain_model, stream_suite, stream_train_filter, ExperimentConfig,
};
use streamcast::forecast::{Checkpoint, CheckpointStage, ForecastModel, HistoryWindow};
use streamcast::scenario::GeneratorConfig;
use streamcast::streamer::{render_prediction_log, OcclusionPolicy};
use streamcast::types::{AgentId, HorizonConfig, LaneMap, MultiModalPrediction, Position2};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

fn compare_golden(name: &str, actual: &str) {
    let path = fixture(name);
    if updating() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert!(actual == expected, "output differs from {name}");
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.horizon = HorizonConfig::new(8, 6, 3).unwrap();
    cfg.hidden = 8;
    cfg.feature_dim = 8;
    cfg.generator = GeneratorConfig { agents_min: 5, agents_max: 6, duration_min: 150, duration_max: 150, ..GeneratorConfig::turning() };
    cfg.pretrain.epochs = 1;
    cfg.finetune.epochs = 1;
    cfg.stream.epochs = 1;
    cfg
}

/// The fixture checkpoint: a tiny learned model and filter trained through all three stages.
fn checkpoint() -> Checkpoint {
    let path = fixture("tiny.ckpt");
    if updating() {
        let cfg = tiny_config();
        let scenarios = generate_suite(0, 2, &cfg.generator).unwrap();
        let (mut learned, _) = pretrain_model(&scenarios, &cfg, 0).unwrap();
        finetune_model(&mut learned, &scenarios, &cfg, 0).unwrap();
        let model = ForecastModel::Learned(learned);
        let (df, _) = stream_train_filter(&model, &scenarios, &cfg, 0).unwrap();
        Checkpoint { stage: CheckpointStage::Stream, model, filter: Some(df) }.write(&path).unwrap();
    }
    Checkpoint::read(&path).unwrap()
}

fn render(p: &MultiModalPrediction) -> String {
    let mut out = String::new();
    for (mode, conf) in p.modes().iter().zip(p.confidences()) {
        let _ = write!(out, "{conf}");
        for s in mode.steps() {
            let _ = write!(out, " {},{}", s[0], s[1]);
        }
        out.push('\n');
    }
    out
}

#[test]
fn learned_prediction_matches_golden() {
    let ckpt = checkpoint();
    let lane_map = LaneMap::new(
        vec![vec![Position2::new(-50.0, 0.0), Position2::new(0.0, 0.0), Position2::new(30.0, 30.0)]],
        12.0,
    )
    .unwrap();
    let target: Vec<Position2> = (0..8).map(|t| Position2::new(-8.0 + 0.9 * t as f64, 0.1 * t as f64)).collect();
    let neighbor: Vec<Position2> = (0..8).map(|t| Position2::new(-20.0 + 1.1 * t as f64, -0.5)).collect();
    let window = HistoryWindow {
        agent_id: AgentId(3),
        frame: 40,
        target: &target,
        neighbors: vec![&neighbor],
        lane_map: &lane_map,
    };
    let (_, prediction) = ckpt.model.forecast(&window);
    let sum: f64 = prediction.confidences().iter().sum();
    assert!((sum - 1.0).abs() < 1e-6);
    compare_golden("tiny-prediction.txt", &render(&prediction));
}

#[test]
fn stream_log_matches_golden() {
    let ckpt = checkpoint();
    let cfg = tiny_config();
    let scenarios = generate_suite(500, 1, &cfg.generator).unwrap();
    let run = || {
        let suite =
            stream_suite(&scenarios, &ckpt.model, OcclusionPolicy::MultiModal, ckpt.filter.as_ref(), cfg.kalman).unwrap();
        render_prediction_log(&suite.logs[0])
    };
    let first = run();
    assert!(first == run(), "repeated streams differ");
    compare_golden("tiny-stream.log", &first);
}
