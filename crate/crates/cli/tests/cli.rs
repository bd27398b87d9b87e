//! End-to-end checks of the binary: exit codes, report files, and
//! byte-identical reruns.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iterlip"))
}

fn quick_config() -> serde_json::Value {
    serde_json::json!({
        "model": {"family": "doubling_ifs"},
        "observable": {"kind": "coordinate", "index": 0},
        "diagnostics": {"gamma0": 2.0, "n0max": 3, "nsamples": 2000},
        "simulation": {
            "cesaro_n": 512, "cesaro_reps": 4, "horizon": 10,
            "decay_paths": 512, "drift_n": 8192, "drift_paths": 8,
            "sample_path_n": 64
        },
        "variance": {
            "n_grid": [128, 512, 2048], "batch_paths": 2048,
            "poisson_pairs": 512, "poisson_paths": 48
        },
        "spectral": {
            "nodes": 65, "t_points": 5, "taylor_ladder": [0.2, 0.1],
            "scan_ts": [0.8, 1.6]
        },
        "harness": {
            "clt_n_grid": [64, 256, 1024], "clt_paths": 2048,
            "local_n_grid": [256, 1024], "local_paths": 2048
        },
        "seed": 99
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn run_full_pipeline_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quick_config());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--threads", "2"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "exit {status:?}");
    for name in ["diagnostics.json", "variance.json", "spectral.json", "clt.json", "summary.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn missing_config_exits_two() {
    let status = bin()
        .args(["diagnose", "--config", "/nonexistent/config.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"model": {"family": "nope"}}"#).unwrap();
    let status = bin().args(["diagnose", "--config"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn identity_model_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config();
    cfg["model"] = serde_json::json!({
        "family": "affine_atoms", "dim": 1,
        "atoms": [{"a": [1.0], "b": [0.0]}], "weights": [1.0]
    });
    let path = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(out.join("diagnostics.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &quick_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, threads) in [(&out_a, "1"), (&out_b, "4")] {
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--seed", "123", "--threads", threads])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in [
        "diagnostics.json",
        "simulate.json",
        "variance.json",
        "spectral.json",
        "clt.json",
        "summary.json",
        "measure.csv",
        "decay.csv",
        "path.csv",
        "spectral_table.csv",
        "clt.csv",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs with different thread counts");
    }
}

#[test]
fn example_config_parses() {
    let output = bin().arg("example-config").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(serde_json::from_str::<serde_json::Value>(&text).is_ok());
}
