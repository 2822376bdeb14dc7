use std::path::Path;

use percnn::error::Error;
use percnn::experiment::{self, preset, ExperimentConfig, PRESETS};
use percnn::field::{load_traj, save_field};
use percnn::trainer::StopReason;
use percnn::Trajectory64;

fn tiny() -> ExperimentConfig {
    let mut cfg = preset("burgers-desk").unwrap();
    cfg.name = "tiny".into();
    cfg.grid.extents = vec![21, 21];
    cfg.grid.dx = 0.05;
    cfg.generate.steps = 60;
    cfg.sample.frames = Some(41);
    cfg.sample.time_stride = 10;
    cfg.model.isg.hidden = 2;
    cfg.model.isg.kernel = 3;
    cfg.train.max_epochs = 4;
    cfg.eval.extra_steps = 20;
    cfg
}

fn pipeline(cfg: &ExperimentConfig, dir: &Path) {
    experiment::generate(cfg, &dir.join("gen")).unwrap();
    experiment::sample(cfg, &dir.join("gen").join(experiment::TRAJECTORY_FILE), &dir.join("data")).unwrap();
}

#[test]
fn presets_validate_and_round_trip() {
    for name in PRESETS {
        let cfg = preset(name).unwrap();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg, "{name}");
    }
    assert!(preset("nope").is_none());
}

#[test]
fn unknown_keys_are_config_errors() {
    let mut v: serde_json::Value = serde_json::from_str(&tiny().to_json()).unwrap();
    v["train"]["learning_rat"] = 0.1.into();
    assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
    let mut v: serde_json::Value = serde_json::from_str(&tiny().to_json()).unwrap();
    v["grid"]["extents"] = serde_json::json!([21, 21, 21]);
    assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
}

#[test]
fn full_pipeline_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    pipeline(&cfg, dir.path());
    let data = dir.path().join("data");
    let measured: Trajectory64 = load_traj(data.join(experiment::MEASUREMENT_FILE)).unwrap();
    assert_eq!(measured.len(), 5);
    assert_eq!(measured.grid().extents(), &[11, 11]);
    let reference: Trajectory64 = load_traj(data.join(experiment::REFERENCE_FILE)).unwrap();
    assert_eq!(reference.len(), 7);

    let run = dir.path().join("run");
    let mut seen = 0;
    let report = experiment::train(&cfg, &data.join(experiment::MEASUREMENT_FILE), &run, false, &mut |_| seen += 1).unwrap();
    assert_eq!(seen, 4);
    assert_eq!(report.stop, StopReason::MaxEpochs);
    let mu = report.estimated_diffusion.clone().unwrap();
    for (c, m) in report.highway_coefficients.iter().zip(&mu) {
        assert!(*c > 0.0 && *c < 2.0 * m);
    }
    for f in [experiment::CHECKPOINT_FILE, experiment::HISTORY_FILE, experiment::RESOLVED_CONFIG, "train.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let resolved = ExperimentConfig::load(run.join(experiment::RESOLVED_CONFIG)).unwrap();
    assert!(resolved.model.highway.upper.is_some());

    let ckpt = run.join(experiment::CHECKPOINT_FILE);
    let ev = experiment::eval(&ckpt, &data.join(experiment::REFERENCE_FILE), cfg.eval.extra_steps, &dir.path().join("eval")).unwrap();
    assert_eq!(ev.frames_compared, 7);
    assert!(ev.train_rmse.is_finite() && ev.extrapolation_rmse.unwrap() >= 0.0);
    assert!(ev.physics_error.unwrap().is_finite());
    let csv = std::fs::read_to_string(dir.path().join("eval").join(experiment::METRICS_FILE)).unwrap();
    assert!(csv.starts_with("t,rmse,physics_error"));

    let it = experiment::interpret(&ckpt, &dir.path().join("interp"), 1e-3).unwrap();
    assert!(!it.pruned.is_empty());
    assert!(dir.path().join("interp").join("equation.json").exists());

    let inf = experiment::infer(&ckpt, &dir.path().join("gen").join(experiment::IC_FILE), 30, &dir.path().join("infer"), true).unwrap();
    assert_eq!(inf.frames, 31);
    assert!(inf.reference_rmse.unwrap().is_finite());
}

#[test]
fn eval_rejects_a_foreign_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    pipeline(&cfg, dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let mut c = cfg.clone();
    c.train.max_epochs = 1;
    experiment::train(&c, &data.join(experiment::MEASUREMENT_FILE), &run, false, &mut |_| {}).unwrap();
    let ckpt = run.join(experiment::CHECKPOINT_FILE);
    let fine = dir.path().join("gen").join(experiment::TRAJECTORY_FILE);
    let on_fine = experiment::eval(&ckpt, &fine, 20, &dir.path().join("eval")).unwrap();
    assert_eq!(on_fine.frames_compared, 61);

    let odd = percnn::Field64::zeros(percnn::GridSpec::new(vec![7, 7], 0.1).unwrap(), 2);
    let foreign = Trajectory64::new(vec![odd.clone(); 7], 2.5e-3, 0.0).unwrap();
    let path = dir.path().join("foreign.pcnt");
    percnn::field::save_traj(&path, &foreign).unwrap();
    let err = experiment::eval(&ckpt, &path, 0, &dir.path().join("eval")).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)), "{err:?}");

    let reference: Trajectory64 = load_traj(data.join(experiment::REFERENCE_FILE)).unwrap();
    let skewed = Trajectory64::new(reference.frames().to_vec(), reference.dt() * 0.73, 0.0).unwrap();
    let path = dir.path().join("skewed.pcnt");
    percnn::field::save_traj(&path, &skewed).unwrap();
    let err = experiment::eval(&ckpt, &path, 0, &dir.path().join("eval")).unwrap_err();
    assert!(matches!(err, Error::TimeMisalignment(_)), "{err:?}");

    save_field(dir.path().join("odd.pcnf"), &odd).unwrap();
    let err = experiment::infer(&ckpt, &dir.path().join("odd.pcnf"), 5, &dir.path().join("inf"), false).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    pipeline(&cfg, dir.path());
    let data = dir.path().join("data").join(experiment::MEASUREMENT_FILE);
    let full = dir.path().join("full");
    experiment::train(&cfg, &data, &full, false, &mut |_| {}).unwrap();
    let split = dir.path().join("split");
    let mut half = cfg.clone();
    half.train.max_epochs = 2;
    experiment::train(&half, &data, &split, false, &mut |_| {}).unwrap();
    experiment::train(&cfg, &data, &split, true, &mut |_| {}).unwrap();
    let a = std::fs::read(full.join(experiment::CHECKPOINT_FILE)).unwrap();
    let b = std::fs::read(split.join(experiment::CHECKPOINT_FILE)).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(full.join(experiment::HISTORY_FILE)).unwrap(),
        std::fs::read(split.join(experiment::HISTORY_FILE)).unwrap()
    );
}
