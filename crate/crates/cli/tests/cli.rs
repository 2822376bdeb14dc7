use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn percnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_percnn")).args(args).env("PERCNN_THREADS", "1").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let out = percnn(&["preset", "burgers-desk"]);
    assert!(out.status.success());
    let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
    v["grid"] = json!({ "extents": [21, 21], "dx": 0.05 });
    v["generate"]["steps"] = json!(60);
    v["sample"]["frames"] = json!(41);
    v["sample"]["time_stride"] = json!(10);
    v["model"]["isg"]["hidden"] = json!(2);
    v["model"]["isg"]["kernel"] = json!(3);
    v["train"]["max_epochs"] = json!(3);
    let path = dir.join("tiny.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn preset_lists_and_prints() {
    let out = percnn(&["preset"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    assert!(names.lines().any(|l| l == "gs2d-desk"));
    let out = percnn(&["preset", "missing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);
    let gen = d.join("gen");
    let data = d.join("data");
    let run = d.join("run");
    assert!(percnn(&["generate", "--config", s(&cfg), "--out", s(&gen)]).status.success());
    assert!(gen.join("config.resolved.json").exists());
    let traj = gen.join("trajectory.pcnt");
    assert!(percnn(&["sample", "--config", s(&cfg), "--in", s(&traj), "--out", s(&data)]).status.success());
    let meas = data.join("measurement.pcnt");
    let out = percnn(&["train", "--config", s(&cfg), "--data", s(&meas), "--out", s(&run), "--log-every", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["epochs"], json!(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));

    // resolved config reproduces the run when fed back
    let again = d.join("again");
    let resolved = run.join("config.resolved.json");
    assert!(percnn(&["train", "--config", s(&resolved), "--data", s(&meas), "--out", s(&again)]).status.success());
    assert_eq!(std::fs::read(run.join("checkpoint.pcnc")).unwrap(), std::fs::read(again.join("checkpoint.pcnc")).unwrap());

    let ckpt = run.join("checkpoint.pcnc");
    let reference = data.join("reference.pcnt");
    let out = percnn(&["eval", "--model", s(&ckpt), "--ref", s(&reference), "--extra", "20", "--out", s(&d.join("eval"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("eval").join("metrics.csv").exists());
    assert!(d.join("eval").join("prediction.pcnt").exists());

    let out = percnn(&["interpret", "--model", s(&ckpt), "--out", s(&d.join("interp"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("u_x"));

    let ic = gen.join("ic.pcnf");
    let out = percnn(&["infer", "--model", s(&ckpt), "--ic", s(&ic), "--steps", "10", "--out", s(&d.join("infer")), "--reference"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["frames"], json!(11));

    // a reference shorter than the rollout is a contract violation; a trajectory is not an IC
    let out = percnn(&["eval", "--model", s(&ckpt), "--ref", s(&d.join("infer").join("prediction.pcnt")), "--out", s(&d.join("e2"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = percnn(&["infer", "--model", s(&ckpt), "--ic", s(&traj), "--steps", "1", "--out", s(&d.join("i2"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["train"]["bogus_key"] = json!(1);
    let bad = d.join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = percnn(&["generate", "--config", s(&bad), "--out", s(&d.join("g"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let out = percnn(&["train", "--config", s(&cfg), "--data", s(&d.join("nope.pcnt")), "--out", s(&d.join("t"))]);
    assert_eq!(out.status.code(), Some(2));

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["generate"]["dt"] = json!(0.5);
    let unstable = d.join("unstable.json");
    std::fs::write(&unstable, v.to_string()).unwrap();
    let out = percnn(&["generate", "--config", s(&unstable), "--out", s(&d.join("u"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));

    let out = Command::new(env!("CARGO_BIN_EXE_percnn")).args(["preset"]).env("PERCNN_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trainable_filters_are_uninterpretable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["model"]["pi"] = json!({ "n_layers": 2, "n_channels": 2, "kernel": 3, "bias": true });
    v["train"]["max_epochs"] = json!(1);
    let conv = d.join("conv.json");
    std::fs::write(&conv, v.to_string()).unwrap();
    assert!(percnn(&["generate", "--config", s(&conv), "--out", s(&d.join("gen"))]).status.success());
    let traj = d.join("gen").join("trajectory.pcnt");
    assert!(percnn(&["sample", "--config", s(&conv), "--in", s(&traj), "--out", s(&d.join("data"))]).status.success());
    let meas = d.join("data").join("measurement.pcnt");
    assert!(percnn(&["train", "--config", s(&conv), "--data", s(&meas), "--out", s(&d.join("run"))]).status.success());
    let out = percnn(&["interpret", "--model", s(&d.join("run").join("checkpoint.pcnc")), "--out", s(&d.join("i"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pi.layer"));
}
