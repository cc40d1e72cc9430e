//! End-to-end runs of the `slicenet` binary on a short schedule.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMOKE: &str = r#"
scenario = { preset = "three_cell" }

[schedule]
default_steps = 80
exploration = 60
training = 60
evaluation = 20
tl_training = 40

[vae]
epochs = 3
min_samples = 20
"#;

fn slicenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slicenet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stage(cmd: &str, config: &Path, seed: u64, out: &Path) -> Output {
    slicenet(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("smoke.toml");
    fs::write(&config, SMOKE).unwrap();
    (dir, config)
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    for cmd in ["baseline", "train", "similarity", "transfer", "evaluate"] {
        let o = stage(cmd, &config, 5, &out);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(out.join(format!("{cmd}-s5/run_meta.toml")).exists(), "{cmd}");
    }
    let metrics = "t,cell,slice,throughput,delay,load,ues,share,reward";
    assert_eq!(header(&out.join("baseline-s5/metrics.csv")), metrics);
    assert_eq!(header(&out.join("train-s5/metrics.csv")), metrics);
    assert_eq!(
        header(&out.join("similarity-s5/distances.csv")),
        "source,target,distance,n_source,n_target,mode"
    );
    assert_eq!(
        header(&out.join("transfer-s5/gain.csv")),
        "t,reward_tl,reward_scratch,gain"
    );
    let gain_rows = fs::read_to_string(out.join("transfer-s5/gain.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    assert_eq!(gain_rows, 40);
    for f in [
        "cdf_throughput.csv",
        "cdf_delay.csv",
        "summary.csv",
        "tl/metrics.csv",
    ] {
        assert!(out.join("evaluate-s5").join(f).exists(), "{f}");
    }
    assert!(out.join("similarity-s5/latents.csv").exists());
    assert!(out.join("train-s5/checkpoints/agent-3.td3").exists());
    assert!(out.join("train-s5/buffers/agent-3.rbuf").exists());

    let meta = fs::read_to_string(out.join("transfer-s5/run_meta.toml")).unwrap();
    assert!(meta.contains("selected_source"), "{meta}");
    assert!(meta.contains("[plan]"), "{meta}");
    assert!(meta.contains("[config"), "{meta}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (dir, config) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(stage("train", &config, 9, out).status.success());
    }
    for f in [
        "metrics.csv",
        "default_trace.csv",
        "checkpoints/agent-1.td3",
        "buffers/agent-2.rbuf",
    ] {
        let x = fs::read(a.join("train-s9").join(f)).unwrap();
        let y = fs::read(b.join("train-s9").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn missing_upstream_is_a_dependency_error() {
    let (dir, config) = setup();
    let o = stage("similarity", &config, 1, &dir.path().join("empty"));
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[dependency]"));
}

#[test]
fn bad_config_is_a_config_error() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "scenario = { preset = \"three_cell\" }\n[schedule]\nexploraton = 5\n",
    )
    .unwrap();
    let o = stage("baseline", &bad, 1, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[config]"));

    let o = stage("baseline", &dir.path().join("missing.toml"), 1, dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn changed_agent_settings_are_rejected_downstream() {
    let (dir, config) = setup();
    let out = dir.path().join("runs");
    assert!(stage("train", &config, 2, &out).status.success());
    let other = dir.path().join("other.toml");
    fs::write(&other, format!("{SMOKE}\n[agent]\nbatch_size = 16\n")).unwrap();
    let o = stage("similarity", &other, 2, &out);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
