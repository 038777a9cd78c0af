use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn srnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srnn-pcm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
mode = "realistic"
epochs = 4
steps = 100

[net]
n_in = 8
n_rec = 6
"#;

#[test]
fn train_writes_metrics_for_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("run");
    let res = srnn(&["train", "--config", path(&cfg), "--seed", "5", "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,mse,firing_rate_hz,pulses_in,pulses_rec,pulses_out,refresh_in,refresh_rec,refresh_out")
    );
    assert_eq!(lines.count(), 4);
    let saved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 5"));
    for f in ["weights_final.csv", "trace.csv", "raster.csv", "loss.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, SMALL).unwrap();
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(srnn(&["train", "--config", path(&cfg), "--seed", seed, "--out", path(&out)])
            .status
            .success());
        (
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("weights_final.csv")).unwrap(),
        )
    };
    assert_eq!(read("a", "3"), read("b", "3"));
    assert_ne!(read("c", "4").0, read("a", "3").0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "epochs = 2\nlearning_rate = 0.1\n").unwrap();
    let res = srnn(&["train", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("learning_rate"));
}

#[test]
fn sweep_writes_a_ranked_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        format!(
            "budget = 3\nseed = 2\n\n[base]\n{}\n[[param]]\npath = \"updater.eta\"\nlow = 0.01\nhigh = 0.1\nlog = true\n",
            SMALL.replace("[net]", "[base.net]")
        ),
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let res = srnn(&["sweep", "--config", path(&cfg), "--out", path(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let board = fs::read_to_string(out.join("leaderboard.csv")).unwrap();
    let scores: Vec<f64> = board
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    assert!(out.join("best.toml").exists());
}

#[test]
fn sweep_without_space_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, "budget = 3\n").unwrap();
    let res = srnn(&["sweep", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty"));
}

#[test]
fn device_bench_and_drift_demo_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(&cfg, "n_values = [1, 4]\ngrid_min = -2.0\ngrid_max = 2.0\ngrid_step = 2.0\n").unwrap();
    let out = dir.path().join("bench");
    let res = srnn(&[
        "device-bench",
        "--config",
        path(&cfg),
        "--repetitions",
        "50",
        "--out",
        path(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("device_bench.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 3 * 3);

    let out = dir.path().join("drift");
    let res = srnn(&["drift-demo", "--seed", "1", "--out", path(&out)]);
    assert!(res.status.success());
    let drift = fs::read_to_string(out.join("drift.csv")).unwrap();
    assert!(drift.starts_with("mode,pulses,t,mean_g,std_g"));
}
