mod config;
mod plot;

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use streamcast::experiment::{
    build_refiner, finetune_model, pretrain_model, stream_suite, stream_train_filter, ExperimentConfig, RefinerKind,
    ABLATION_GRID,
};
use streamcast::forecast::{AnalyticModel, Checkpoint, CheckpointStage, ForecastModel};
use streamcast::metrics::{
    aggregate_queries, evaluate_queries, parse_report_csv, render_fluctuation_csv, render_report_csv, render_report_text,
    report_rows, MetricsConfig, MetricsReport, QueryMetrics, REPORT_COLUMNS,
};
use streamcast::scenario::{generate_scenario, read_log, render_log, GeneratorConfig, Scenario};
use streamcast::streamer::OcclusionPolicy;

#[derive(Parser)]
#[command(name = "streamcast", version, about = "Streaming motion forecasting experiments")]
struct Cli {
    /// Seed for generation and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding parts of the experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// History length, forecast horizon and number of modes.
    #[arg(long, global = true, value_name = "TAU_H,TAU_F,K")]
    horizon: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Turning,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Pretrain,
    Finetune,
    Stream,
}

#[derive(Subcommand)]
enum Command {
    /// Write one scenario log per seed plus a manifest.
    Generate {
        /// Inclusive seed range `FIRST-LAST`, or a single seed.
        #[arg(long, default_value = "0-9")]
        seeds: String,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training stage on the scenario logs in a directory.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint_in: Option<PathBuf>,
        #[arg(long)]
        checkpoint_out: PathBuf,
        /// Loss-curve CSV; defaults to the checkpoint path with `.loss.csv`.
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Stream every scenario, score the predictions and write reports.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Trained checkpoint; without one the analytic forecaster is used.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "multi", value_parser = ["multi", "single", "kf"])]
        policy: String,
        #[arg(long, default_value = "none", value_parser = ["df", "none", "kf"])]
        refiner: String,
        #[arg(long)]
        k_eval: Option<usize>,
        #[arg(long)]
        mr_threshold: Option<f64>,
        /// Run the baseline, +OCC and +OCC+DF grid instead of one setting.
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render report CSVs as an SVG bar chart.
    Plot {
        #[arg(required = false)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_seeds(s: &str) -> Result<(u64, u64)> {
    let bad = || format!("--seeds expects FIRST-LAST or a single seed, got '{s}'");
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse().with_context(bad)?, b.trim().parse().with_context(bad)?),
        None => {
            let v = s.trim().parse().with_context(bad)?;
            (v, v)
        }
    };
    ensure!(a <= b, "seed range {a}-{b} is empty");
    Ok((a, b))
}

#[derive(Serialize)]
struct ManifestEntry {
    seed: u64,
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    format: &'static str,
    generator_config_sha256: String,
    seeds: String,
    generator: GeneratorConfig,
    scenarios: Vec<ManifestEntry>,
}

fn cmd_generate(cfg: &ExperimentConfig, seeds: &str, out: &Path) -> Result<()> {
    let (first, last) = parse_seeds(seeds)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut scenarios = Vec::new();
    for seed in first..=last {
        let scenario = generate_scenario(seed, &cfg.generator).with_context(|| format!("generating seed {seed}"))?;
        let text = render_log(&scenario);
        let file = format!("scenario-{seed:06}.log");
        let path = out.join(&file);
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        scenarios.push(ManifestEntry { seed, file, sha256: config::sha256_hex(text.as_bytes()) });
    }
    let manifest = Manifest {
        format: "streamcast-manifest-1",
        generator_config_sha256: config::config_hash(&cfg.generator)?,
        seeds: format!("{first}-{last}"),
        generator: cfg.generator.clone(),
        scenarios,
    };
    let path = out.join("manifest.toml");
    std::fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} scenario logs and {}", last - first + 1, path.display());
    Ok(())
}

fn read_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "log"))
        .collect();
    paths.sort();
    ensure!(!paths.is_empty(), "no .log scenario files in {}", dir.display());
    paths.iter().map(|p| read_log(p).with_context(|| format!("reading {}", p.display()))).collect()
}

fn check_horizon(loaded: &config::Loaded, model: &ForecastModel) -> Result<()> {
    let h = model.horizon();
    if loaded.explicit_horizon && loaded.config.horizon != h {
        let c = loaded.config.horizon;
        bail!(
            "horizon mismatch: requested {},{},{} but the checkpoint uses {},{},{}",
            c.tau_h,
            c.tau_f,
            c.k,
            h.tau_h,
            h.tau_f,
            h.k
        );
    }
    Ok(())
}

fn loss_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        out += &format!("{},{l}\n", i + 1);
    }
    out
}

fn cmd_train(
    loaded: &config::Loaded,
    seed: u64,
    stage: Stage,
    data: &Path,
    checkpoint_in: Option<&Path>,
    checkpoint_out: &Path,
    loss_out: Option<&Path>,
) -> Result<()> {
    let cfg = &loaded.config;
    let input = checkpoint_in
        .map(|p| Checkpoint::read(p).with_context(|| format!("reading checkpoint {}", p.display())))
        .transpose()?;
    if let Some(ck) = &input {
        check_horizon(loaded, &ck.model)?;
    }
    let scenarios = read_scenarios(data)?;
    let (checkpoint, curve) = match (stage, input) {
        (Stage::Pretrain, None) => {
            let (model, report) = pretrain_model(&scenarios, cfg, seed)?;
            (Checkpoint { stage: CheckpointStage::Pretrain, model: ForecastModel::Learned(model), filter: None }, report.loss_curve)
        }
        (Stage::Pretrain, Some(_)) => bail!("pretraining starts from scratch; drop --checkpoint-in"),
        (Stage::Finetune, None) => bail!("finetuning requires a pretrained checkpoint (--checkpoint-in)"),
        (Stage::Finetune, Some(ck)) => {
            ensure!(ck.stage <= CheckpointStage::Finetune, "cannot finetune a {} checkpoint", ck.stage);
            let ForecastModel::Learned(mut model) = ck.model else { bail!("only learned forecasters can be finetuned") };
            let report = finetune_model(&mut model, &scenarios, cfg, seed)?;
            (Checkpoint { stage: CheckpointStage::Finetune, model: ForecastModel::Learned(model), filter: None }, report.loss_curve)
        }
        (Stage::Stream, None) => bail!("streaming training requires a finetuned checkpoint (--checkpoint-in)"),
        (Stage::Stream, Some(ck)) => {
            ensure!(
                ck.stage >= CheckpointStage::Finetune,
                "streaming training requires a finetuned checkpoint, got a {} checkpoint",
                ck.stage
            );
            let (df, report) = stream_train_filter(&ck.model, &scenarios, cfg, seed)?;
            (Checkpoint { stage: CheckpointStage::Stream, model: ck.model, filter: Some(df) }, report.loss_curve)
        }
    };
    ensure!(curve.iter().all(|l| l.is_finite()), "training produced a non-finite loss");
    checkpoint.write(checkpoint_out).with_context(|| format!("writing {}", checkpoint_out.display()))?;
    let loss_path = loss_out.map(Path::to_path_buf).unwrap_or_else(|| checkpoint_out.with_extension("loss.csv"));
    std::fs::write(&loss_path, loss_csv(&curve)).with_context(|| format!("writing {}", loss_path.display()))?;
    println!("wrote {} and {}", checkpoint_out.display(), loss_path.display());
    Ok(())
}

struct Scored {
    queries: Vec<(usize, QueryMetrics)>,
    report: MetricsReport,
}

fn score(
    scenarios: &[Scenario],
    model: &ForecastModel,
    policy: OcclusionPolicy,
    refiner: Option<&streamcast::dfilter::DifferentiableFilter>,
    cfg: &ExperimentConfig,
    ks: &[usize],
) -> Result<Vec<Scored>> {
    let suite = stream_suite(scenarios, model, policy, refiner, cfg.kalman)?;
    ks.iter()
        .map(|&k| {
            let metrics = MetricsConfig { k_eval: k, ..cfg.metrics };
            let mut queries = Vec::new();
            for (i, s) in scenarios.iter().enumerate() {
                queries.extend(evaluate_queries(s, &suite.schedules[i], &suite.logs[i], &metrics)?.into_iter().map(|q| (i, q)));
            }
            let report = aggregate_queries(&queries, &metrics);
            Ok(Scored { queries, report })
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    loaded: &config::Loaded,
    data: &Path,
    checkpoint: Option<&Path>,
    policy: &str,
    refiner: &str,
    k_eval: Option<usize>,
    mr_threshold: Option<f64>,
    ablation: bool,
    out: &Path,
) -> Result<()> {
    let mut cfg = loaded.config.clone();
    if let Some(t) = mr_threshold {
        ensure!(t > 0.0 && t.is_finite(), "--mr-threshold must be positive");
        cfg.metrics.mr_threshold = t;
    }
    let (model, filter) = match checkpoint {
        Some(p) => {
            let ck = Checkpoint::read(p).with_context(|| format!("reading checkpoint {}", p.display()))?;
            (ck.model, ck.filter)
        }
        None => (ForecastModel::Analytic(AnalyticModel::new(cfg.horizon)), None),
    };
    check_horizon(loaded, &model)?;
    let k_max = model.horizon().k;
    let ks: Vec<usize> = match k_eval {
        Some(k) => {
            ensure!((1..=k_max).contains(&k), "--k-eval {k} outside 1..={k_max}");
            vec![k]
        }
        None if ablation => {
            let mut v = vec![1, k_max.min(6)];
            v.dedup();
            v
        }
        None => vec![cfg.metrics.k_eval.min(k_max)],
    };
    let scenarios = read_scenarios(data)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut summary = String::new();
    if ablation {
        let mut table = format!("setting,policy,refiner,k_eval,{},moving_occluded_min_fde\n", REPORT_COLUMNS[1..].join(","));
        for cell in ABLATION_GRID {
            let df = build_refiner(cell.refiner, &model, filter.as_ref(), &cfg)?;
            for (k, scored) in ks.iter().zip(score(&scenarios, &model, cell.policy, df.as_ref(), &cfg, &ks)?) {
                write(&out.join(format!("{}-k{k}.csv", cell.label)), &render_report_csv(&scored.report))?;
                let rows = report_rows(&scored.report);
                let overall = rows.last().expect("overall row");
                let cells: Vec<String> = overall.values.iter().map(|v| v.map_or("NA".into(), |x| x.to_string())).collect();
                let occluded = rows.iter().find(|r| r.label == "moving-occluded").and_then(|r| r.column("min_fde_k"));
                table += &format!(
                    "{},{},{},{k},{},{},{},{}\n",
                    cell.label,
                    cell.policy,
                    cell.refiner,
                    overall.queries,
                    overall.agents,
                    cells.join(","),
                    occluded.map_or("NA".into(), |x| x.to_string())
                );
                summary += &render_report_text(&format!("{} (policy {}, refiner {})", cell.label, cell.policy, cell.refiner), &scored.report);
                summary.push('\n');
            }
        }
        write(&out.join("ablation.csv"), &table)?;
    } else {
        let policy: OcclusionPolicy = policy.parse()?;
        let kind: RefinerKind = refiner.parse()?;
        let df = build_refiner(kind, &model, filter.as_ref(), &cfg)?;
        for (k, scored) in ks.iter().zip(score(&scenarios, &model, policy, df.as_ref(), &cfg, &ks)?) {
            write(&out.join(format!("report-k{k}.csv")), &render_report_csv(&scored.report))?;
            write(&out.join(format!("fluctuation-k{k}.csv")), &render_fluctuation_csv(&scored.queries))?;
            summary += &render_report_text(&format!("policy {policy}, refiner {kind}"), &scored.report);
        }
    }
    write(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_plot(reports: &[PathBuf], out: &Path) -> Result<()> {
    ensure!(!reports.is_empty(), "nothing to plot: pass at least one report CSV");
    let mut parsed = Vec::new();
    for p in reports {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let rows = parse_report_csv(&text).with_context(|| format!("parsing {}", p.display()))?;
        let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        parsed.push((name, rows));
    }
    write(out, &plot::render_svg(&parsed)?)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let base = match &cli.command {
        Command::Generate { preset: Preset::Turning, .. } => {
            ExperimentConfig { generator: GeneratorConfig::turning(), ..ExperimentConfig::default() }
        }
        _ => ExperimentConfig::default(),
    };
    let loaded = config::load(base, cli.config.as_deref(), cli.horizon.as_deref())?;
    match &cli.command {
        Command::Generate { seeds, out, .. } => cmd_generate(&loaded.config, seeds, out),
        Command::Train { stage, data, checkpoint_in, checkpoint_out, loss_out } => {
            cmd_train(&loaded, cli.seed, *stage, data, checkpoint_in.as_deref(), checkpoint_out, loss_out.as_deref())
        }
        Command::Evaluate { data, checkpoint, policy, refiner, k_eval, mr_threshold, ablation, out } => cmd_evaluate(
            &loaded,
            data,
            checkpoint.as_deref(),
            policy,
            refiner,
            *k_eval,
            *mr_threshold,
            *ablation,
            out,
        ),
        Command::Plot { reports, out } => cmd_plot(reports, out),
    }
}
