use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::{downsample, load_field, load_traj, node_stride, save_field, save_traj, add_noise, Field, Trajectory};
use crate::interpret::extract;
use crate::metrics::{accumulative_rmse, curves_csv, metrics_csv, physics_error, ErrorCurve};
use crate::model::PercnnModel;
use crate::solver::{default_ic, generate as solve, PdeSystem};
use crate::trainer::{estimate_diffusion, history_csv, Checkpoint, HistoryRow, StopReason, Trainer};

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const TRAJECTORY_FILE: &str = "trajectory.pcnt";
pub const IC_FILE: &str = "ic.pcnf";
pub const MEASUREMENT_FILE: &str = "measurement.pcnt";
pub const REFERENCE_FILE: &str = "reference.pcnt";
pub const CHECKPOINT_FILE: &str = "checkpoint.pcnc";
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTION_FILE: &str = "prediction.pcnt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PHYSICS_FILE: &str = "physics.csv";

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write(path: PathBuf, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    write(path, text)
}

fn resolved(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write(out.join(RESOLVED_CONFIG), cfg.to_json() + "\n")
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerateReport {
    pub frames: usize,
    pub dt: f64,
    pub t_end: f64,
    pub max_abs: f64,
}

/// Integrates the configured system and writes the fine trajectory and its
/// initial condition.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<GenerateReport> {
    prepare(out)?;
    resolved(out, cfg)?;
    let grid = cfg.fine_grid()?;
    let g = &cfg.generate;
    let ic: Field<f64> = match &g.ic {
        Some(path) => load_field(path)?,
        None => default_ic(&cfg.system, &grid, g.seed)?,
    };
    if ic.grid() != &grid {
        return Err(Error::ShapeMismatch(format!("initial condition on {:?}, config grid {:?}", ic.grid().extents(), grid.extents())));
    }
    let traj = solve(&cfg.system, &ic, g.dt, g.steps, g.record_every)?;
    save_field(out.join(IC_FILE), &ic)?;
    save_traj(out.join(TRAJECTORY_FILE), &traj)?;
    let report = GenerateReport {
        frames: traj.len(),
        dt: traj.dt(),
        t_end: traj.time(traj.len() - 1),
        max_abs: traj.frames().iter().map(|f| f.max_abs()).fold(0.0, f64::max),
    };
    write_json(out.join("generate.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleReport {
    pub frames: usize,
    pub extents: Vec<usize>,
    pub dt: f64,
    pub noise: f64,
}

/// Subsamples a fine trajectory in time and space, then adds noise. Writes the
/// noisy measurement window and the clean subsample of the whole trajectory,
/// which later serves as the evaluation reference.
pub fn sample(cfg: &ExperimentConfig, input: &Path, out: &Path) -> Result<SampleReport> {
    prepare(out)?;
    resolved(out, cfg)?;
    let fine: Trajectory<f64> = load_traj(input)?;
    let s = &cfg.sample;
    let clean = downsample(&fine, s.space_stride, s.time_stride)?;
    let measured = match s.frames {
        Some(n) => downsample(&fine.truncate(n)?, s.space_stride, s.time_stride)?,
        None => clean.clone(),
    };
    let noisy = add_noise(&measured, s.noise, s.seed)?;
    save_traj(out.join(REFERENCE_FILE), &clean)?;
    save_traj(out.join(MEASUREMENT_FILE), &noisy)?;
    let report = SampleReport { frames: noisy.len(), extents: noisy.grid().extents().to_vec(), dt: noisy.dt(), noise: s.noise };
    write_json(out.join("sample.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub stop: StopReason,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub param_count: usize,
    /// Regression estimate behind the highway bounds, when it was needed.
    pub estimated_diffusion: Option<Vec<f64>>,
    pub highway_coefficients: Vec<f64>,
}

/// Trains on a measurement file. With `resume`, continues from the
/// checkpoint already in `out`.
pub fn train(
    cfg: &ExperimentConfig,
    data_path: &Path,
    out: &Path,
    resume: bool,
    on_epoch: &mut dyn FnMut(&HistoryRow),
) -> Result<TrainReport> {
    let data: Trajectory<f64> = load_traj(data_path)?;
    prepare(out)?;
    let mut cfg = cfg.clone();
    let mut estimated = None;
    if cfg.model.highway.enabled && cfg.model.highway.upper.is_none() {
        let mu = estimate_diffusion(&data)?;
        cfg.model.highway.upper = Some(mu.iter().map(|m| 2.0 * m).collect());
        estimated = Some(mu);
    }
    resolved(out, &cfg)?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut trainer = if resume {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if ckpt.meta.model != cfg.model {
            return Err(Error::Config("model section differs from the checkpoint being resumed".into()));
        }
        Trainer::resume(&ckpt, data, Some(cfg.train.clone()))?
    } else {
        let model = PercnnModel::new(cfg.model.clone(), data.channels(), data.grid().clone(), cfg.fine_grid()?, cfg.train.seed)?;
        Trainer::new(model, data, cfg.train.clone())?.with_physics(cfg.system.clone())
    };
    let mut run = || -> Result<StopReason> {
        loop {
            if let Some(stop) = trainer.run_for(0)? {
                return Ok(stop);
            }
            let row = trainer.step()?;
            on_epoch(&row);
        }
    };
    let stop = run();
    trainer.checkpoint().save(&ckpt_path)?;
    write(out.join(HISTORY_FILE), history_csv(trainer.history()))?;
    let stop = stop?;
    let best = trainer.best_model()?;
    let report = TrainReport {
        stop,
        epochs: trainer.epoch(),
        best_epoch: trainer.best_epoch(),
        best_loss: trainer.checkpoint().meta.best_loss,
        param_count: best.param_count(),
        estimated_diffusion: estimated,
        highway_coefficients: best.highway_coefficients(),
    };
    write_json(out.join("train.json"), &report)?;
    if stop == StopReason::Diverged {
        return Err(Error::Diverged { epochs: trainer.epoch() });
    }
    Ok(report)
}

/// Brings a fine-grid prediction and a reference onto common nodes and frame
/// times. The reference may sit on the fine grid or on a strided subset of it.
fn align(pred: &Trajectory<f64>, reference: &Trajectory<f64>) -> Result<(Trajectory<f64>, Trajectory<f64>)> {
    let mismatch = || {
        Error::ShapeMismatch(format!(
            "reference is {} channels on {:?}, prediction {} on {:?}",
            reference.channels(),
            reference.grid().extents(),
            pred.channels(),
            pred.grid().extents()
        ))
    };
    if pred.channels() != reference.channels() {
        return Err(mismatch());
    }
    let pred = if pred.grid() == reference.grid() {
        pred.clone()
    } else {
        let stride = node_stride(reference.grid(), pred.grid()).map_err(|_| mismatch())?;
        downsample(pred, stride, 1)?
    };
    let ratio = |a: f64, b: f64| -> Option<usize> {
        let r = a / b;
        (r.round() >= 1.0 && (r - r.round()).abs() <= 1e-9 * r).then_some(r.round() as usize)
    };
    let (p, r) = if let Some(k) = ratio(reference.dt(), pred.dt()) {
        (pred.every(k)?, reference.clone())
    } else if let Some(k) = ratio(pred.dt(), reference.dt()) {
        (pred, reference.every(k)?)
    } else {
        return Err(Error::TimeMisalignment(format!("reference dt {} vs model dt {}", reference.dt(), pred.dt())));
    };
    if r.len() < p.len() {
        return Err(Error::ShapeMismatch(format!("reference holds {} frames, prediction needs {}", r.len(), p.len())));
    }
    let r = Trajectory::new(r.frames()[..p.len()].to_vec(), p.dt(), p.t0())?;
    Ok((p, r))
}

fn mean_from(curve: &ErrorCurve, t: f64) -> Option<f64> {
    let v: Vec<f64> = curve.times().iter().zip(curve.values()).filter(|(s, _)| **s >= t - 1e-12).map(|(_, v)| *v).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub window_steps: usize,
    pub extra_steps: usize,
    pub frames_compared: usize,
    /// Accumulative RMSE at the end of the measured window.
    pub train_rmse: f64,
    /// Accumulative RMSE at the end of the extrapolation, when there is one.
    pub extrapolation_rmse: Option<f64>,
    pub system: Option<PdeSystem>,
    /// Mean physics residual of the fine prediction over the extrapolation
    /// period, or over the whole window when there is none.
    pub physics_error: Option<f64>,
    /// Same residual for the predicted state at the window end held constant.
    pub persistence_physics_error: Option<f64>,
}

/// Rolls the trained model over its measured window plus `extra` steps and
/// scores it against a fine reference trajectory.
pub fn eval(model_path: &Path, ref_path: &Path, extra: usize, out: &Path) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(model_path)?;
    let reference: Trajectory<f64> = load_traj(ref_path)?;
    prepare(out)?;
    write_json(
        out.join(RESOLVED_CONFIG),
        &json!({ "command": "eval", "model": model_path, "reference": ref_path, "extra_steps": extra }),
    )?;
    let model: PercnnModel<f64> = ckpt.best_model()?;
    let window = ckpt.meta.window_steps;
    let pred = model.predict(&ckpt.initial_field()?, window + extra)?;
    save_traj(out.join(PREDICTION_FILE), &pred)?;
    let (p, r) = align(&pred, &reference)?;
    let rmse = accumulative_rmse(&p, &r)?;
    let t_window = window as f64 * model.dt();
    let from = if extra > 0 { t_window } else { 0.0 };
    let system = ckpt.meta.system.clone();
    let (mut physics, mut persistence) = (None, None);
    match &system {
        Some(sys) if pred.len() >= 3 => {
            let curve = physics_error(&pred, sys)?;
            let frozen = Trajectory::new(vec![pred.frame(window).clone(); pred.len()], pred.dt(), pred.t0())?;
            let base = physics_error(&frozen, sys)?;
            write(out.join(METRICS_FILE), metrics_csv(&rmse, Some(&curve)))?;
            write(out.join(PHYSICS_FILE), curves_csv(&["physics_error", "persistence"], &[&curve, &base])?)?;
            physics = mean_from(&curve, from);
            persistence = mean_from(&base, from);
        }
        _ => write(out.join(METRICS_FILE), metrics_csv(&rmse, None))?,
    }
    let report = EvalReport {
        window_steps: window,
        extra_steps: extra,
        frames_compared: p.len(),
        train_rmse: rmse.at(t_window).unwrap_or(f64::NAN),
        extrapolation_rmse: (extra > 0).then(|| rmse.last().unwrap_or(f64::NAN)),
        system,
        physics_error: physics,
        persistence_physics_error: persistence,
    };
    write_json(out.join("summary.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpretReport {
    pub raw: String,
    pub pruned: String,
    pub relative_threshold: f64,
    pub dropped_mass: f64,
}

/// Extracts the learned right-hand side as polynomials and prunes terms below
/// `relative_threshold` times the largest coefficient of each channel.
pub fn interpret(model_path: &Path, out: &Path, relative_threshold: f64) -> Result<InterpretReport> {
    let ckpt = Checkpoint::load(model_path)?;
    let model: PercnnModel<f64> = ckpt.best_model()?;
    prepare(out)?;
    write_json(
        out.join(RESOLVED_CONFIG),
        &json!({ "command": "interpret", "model": model_path, "relative_threshold": relative_threshold }),
    )?;
    let sym = extract(&model)?;
    let (pruned, dropped) = sym.prune_relative(relative_threshold)?;
    let report = InterpretReport {
        raw: sym.to_text(),
        pruned: pruned.to_text(),
        relative_threshold,
        dropped_mass: dropped.dropped_mass,
    };
    write(out.join("equation.txt"), format!("{}\n", report.pruned))?;
    write(out.join("equation.raw.txt"), format!("{}\n", report.raw))?;
    write_json(
        out.join("equation.json"),
        &json!({
            "raw": sym.to_json(),
            "pruned": pruned.to_json(),
            "relative_threshold": relative_threshold,
            "dropped_mass": dropped.dropped_mass,
        }),
    )?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct InferReport {
    pub steps: usize,
    pub frames: usize,
    /// Accumulative RMSE against the solver at the last frame, when computed.
    pub reference_rmse: Option<f64>,
}

/// Predicts from a new initial condition. A coarse field feeds the model
/// directly; a fine field is subsampled first and, with `reference`, also
/// integrated by the solver for comparison.
pub fn infer(model_path: &Path, ic_path: &Path, steps: usize, out: &Path, reference: bool) -> Result<InferReport> {
    let ckpt = Checkpoint::load(model_path)?;
    let model: PercnnModel<f64> = ckpt.best_model()?;
    let ic: Field<f64> = load_field(ic_path)?;
    prepare(out)?;
    write_json(
        out.join(RESOLVED_CONFIG),
        &json!({ "command": "infer", "model": model_path, "ic": ic_path, "steps": steps, "reference": reference }),
    )?;
    let (coarse, fine) = if ic.grid() == model.coarse() {
        (ic, None)
    } else if ic.grid() == model.fine() {
        let stride = node_stride(model.coarse(), model.fine())?;
        let one = Trajectory::new(vec![ic.clone()], 1.0, 0.0)?;
        (downsample(&one, stride, 1)?.frame(0).clone(), Some(ic))
    } else {
        return Err(Error::ShapeMismatch(format!(
            "initial condition on {:?} matches neither the coarse {:?} nor the fine {:?} grid",
            ic.grid().extents(),
            model.coarse().extents(),
            model.fine().extents()
        )));
    };
    if coarse.channels() != model.channels() {
        return Err(Error::ShapeMismatch(format!("initial condition has {} channels", coarse.channels())));
    }
    let pred = model.predict(&coarse, steps)?;
    save_traj(out.join(PREDICTION_FILE), &pred)?;
    let mut reference_rmse = None;
    if reference {
        let (Some(fine_ic), Some(sys)) = (fine, &ckpt.meta.system) else {
            return Err(Error::InvalidArgument("a solver reference needs a fine-grid initial condition and a known system".into()));
        };
        let truth = solve(sys, &fine_ic, model.dt(), steps, 1)?;
        save_traj(out.join(REFERENCE_FILE), &truth)?;
        let rmse = accumulative_rmse(&pred, &truth)?;
        write(out.join(METRICS_FILE), metrics_csv(&rmse, None))?;
        reference_rmse = rmse.last();
    }
    let report = InferReport { steps, frames: pred.len(), reference_rmse };
    write_json(out.join("summary.json"), &report)?;
    Ok(report)
}
