use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
horizon = { tau_h = 8, tau_f = 6, k = 3 }
hidden = 8
feature_dim = 8
[generator]
agents_min = 5
agents_max = 6
duration_min = 150
duration_max = 150
[pretrain]
epochs = 1
[finetune]
epochs = 1
[stream]
epochs = 1
"#;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn streamcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamcast"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn streamcast")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = streamcast(dir, args);
    assert!(
        out.status.success(),
        "streamcast {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = streamcast(dir, args);
    assert_eq!(out.status.code(), Some(1), "streamcast {args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn compare_golden(name: &str, actual: &str) {
    let path = fixtures().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(actual, expected, "output differs from {name}");
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn train_all(dir: &Path, seed: &str) {
    let base = ["--config", "tiny.toml", "--seed", seed];
    ok(dir, &[&base[..], &["generate", "--seeds", "0-1", "--out", "data"]].concat());
    ok(dir, &[&base[..], &["train", "--stage", "pretrain", "--data", "data", "--checkpoint-out", "pre.ckpt"]].concat());
    ok(
        dir,
        &[&base[..], &["train", "--stage", "finetune", "--data", "data", "--checkpoint-in", "pre.ckpt", "--checkpoint-out", "ft.ckpt"]].concat(),
    );
    ok(
        dir,
        &[&base[..], &["train", "--stage", "stream", "--data", "data", "--checkpoint-in", "ft.ckpt", "--checkpoint-out", "df.ckpt"]].concat(),
    );
}

#[test]
fn generate_is_reproducible_and_manifest_tracks_config() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["--config", "tiny.toml", "generate", "--seeds", "0-9", "--out", "a"]);
    ok(d, &["--config", "tiny.toml", "generate", "--seeds", "0-9", "--out", "b"]);
    let logs: Vec<_> = fs::read_dir(d.join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".log"))
        .collect();
    assert_eq!(logs.len(), 10);
    for name in logs.iter().chain([&"manifest.toml".to_string()]) {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap(), "{name}");
    }

    fs::write(d.join("fast.toml"), TINY.replace("duration_max = 150\n", "duration_max = 150\nspeed_max_mps = 9.0\n")).unwrap();
    let hash = |dir: &str| {
        let text = fs::read_to_string(d.join(dir).join("manifest.toml")).unwrap();
        let value: toml::Value = text.parse().unwrap();
        value["generator_config_sha256"].as_str().unwrap().to_string()
    };
    ok(d, &["--config", "fast.toml", "generate", "--seeds", "0", "--out", "c"]);
    assert_ne!(hash("a"), hash("c"));
}

#[test]
fn training_writes_finite_loss_and_is_deterministic() {
    let one = workspace();
    let two = workspace();
    train_all(one.path(), "3");
    train_all(two.path(), "3");
    for stage in ["pre", "ft", "df"] {
        let losses = csv_rows(&one.path().join(format!("{stage}.loss.csv")));
        assert!(!losses.is_empty());
        for row in losses {
            let loss: f64 = row[1].parse().unwrap();
            assert!(loss.is_finite() && loss > 0.0, "{stage}: {loss}");
        }
        let ckpt = format!("{stage}.ckpt");
        assert_eq!(fs::read(one.path().join(&ckpt)).unwrap(), fs::read(two.path().join(&ckpt)).unwrap(), "{ckpt}");
    }

    let other = workspace();
    train_all(other.path(), "4");
    assert_ne!(fs::read(one.path().join("pre.ckpt")).unwrap(), fs::read(other.path().join("pre.ckpt")).unwrap());
}

#[test]
fn training_stages_must_run_in_order() {
    let dir = workspace();
    let d = dir.path();
    train_all(d, "0");
    let base = ["--config", "tiny.toml", "train", "--data", "data", "--checkpoint-out", "x.ckpt"];
    let err = fails(d, &[&base[..], &["--stage", "stream", "--checkpoint-in", "pre.ckpt"]].concat());
    assert!(err.contains("finetune"), "{err}");
    fails(d, &[&base[..], &["--stage", "stream"]].concat());
    fails(d, &[&base[..], &["--stage", "finetune"]].concat());
    fails(d, &[&base[..], &["--stage", "finetune", "--checkpoint-in", "df.ckpt"]].concat());
    fails(d, &[&base[..], &["--stage", "pretrain", "--checkpoint-in", "pre.ckpt"]].concat());
    assert!(!d.join("x.ckpt").exists());
}

#[test]
fn ablation_reports_every_setting_per_k() {
    let dir = workspace();
    let d = dir.path();
    train_all(d, "0");
    ok(d, &["--config", "tiny.toml", "evaluate", "--data", "data", "--checkpoint", "df.ckpt", "--ablation", "--out", "ev"]);
    let rows = csv_rows(&d.join("ev/ablation.csv"));
    assert_eq!(rows.len(), 6);
    for k in ["1", "3"] {
        let settings: Vec<&str> = rows.iter().filter(|r| r[3] == k).map(|r| r[0].as_str()).collect();
        assert_eq!(settings, ["baseline", "occ", "occ+df"]);
    }
    for row in &rows {
        let fde_k: f64 = row[6].parse().unwrap();
        let fde_1: f64 = row[9].parse().unwrap();
        assert!(fde_k <= fde_1 + 1e-12, "{row:?}");
    }
    for name in ["baseline-k1.csv", "occ-k3.csv", "occ+df-k3.csv", "summary.txt"] {
        assert!(d.join("ev").join(name).exists(), "{name}");
    }
}

#[test]
fn evaluate_rejects_horizon_mismatch() {
    let dir = workspace();
    let d = dir.path();
    train_all(d, "0");
    let err = fails(
        d,
        &["--config", "tiny.toml", "--horizon", "8,7,3", "evaluate", "--data", "data", "--checkpoint", "df.ckpt", "--out", "ev"],
    );
    assert!(err.contains("horizon"), "{err}");
    ok(d, &["--config", "tiny.toml", "--horizon", "8,6,3", "evaluate", "--data", "data", "--checkpoint", "df.ckpt", "--out", "ev"]);
}

#[test]
fn ablation_matches_golden() {
    let dir = workspace();
    let d = dir.path();
    train_all(d, "0");
    ok(d, &["--config", "tiny.toml", "evaluate", "--data", "data", "--checkpoint", "df.ckpt", "--ablation", "--out", "ev"]);
    compare_golden("ablation.csv", &fs::read_to_string(d.join("ev/ablation.csv")).unwrap());
    compare_golden("occ-k3.csv", &fs::read_to_string(d.join("ev/occ-k3.csv")).unwrap());
    ok(d, &["--config", "tiny.toml", "evaluate", "--data", "data", "--out", "cv"]);
    compare_golden("analytic-k3.csv", &fs::read_to_string(d.join("cv/report-k3.csv")).unwrap());
}

#[test]
fn plot_groups_bars_per_subset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = fixtures().join("report-a.csv");
    let b = fixtures().join("report-b.csv");
    let subsets = csv_rows(&a).len();

    ok(d, &["plot", a.to_str().unwrap(), "--out", "one.svg"]);
    let one = fs::read_to_string(d.join("one.svg")).unwrap();
    assert_eq!(one.matches("<title>").count(), 2 * subsets);
    assert!(!one.contains("#dd8452"));

    ok(d, &["plot", a.to_str().unwrap(), b.to_str().unwrap(), "--out", "two.svg"]);
    let two = fs::read_to_string(d.join("two.svg")).unwrap();
    assert_eq!(two.matches("<title>").count(), 4 * subsets);
    assert!(two.contains("report-a") && two.contains("report-b"));
    compare_golden("two.svg", &two);

    fails(d, &["plot", "--out", "none.svg"]);
    assert!(!d.join("none.svg").exists());
}
