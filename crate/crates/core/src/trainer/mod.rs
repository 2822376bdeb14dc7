//! Full-batch training of the recurrent model on one measured trajectory:
//! data misfit at the measured nodes and times plus a penalty tying the
//! generated initial state to the interpolated first measurement.
//!
//! Gradients of long rollouts are computed segment by segment. An eager pass
//! stores the state at segment boundaries; each segment is then replayed on
//! its own tape, seeded with the adjoint of the segment that follows it, so
//! memory is bounded by [`TrainConfig::segment_budget`].

mod adam;
mod checkpoint;
mod diffusion;

pub use adam::{Adam, BETA1, BETA2, EPS};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use diffusion::estimate_diffusion;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Eager, Graph, Tape};
use crate::error::{Error, Result};
use crate::field::{interpolate, Field, Trajectory};
use crate::metrics::physics_error;
use crate::model::{Bound, Param, PercnnModel, THETA_LIMIT};
use crate::scalar::Real;
use crate::solver::PdeSystem;

/// Rollouts whose state leaves `[-STATE_GUARD, STATE_GUARD]` are cut short.
pub const STATE_GUARD: f64 = 1e3;
/// Loss charged for every measured frame a cut-short rollout never reached.
pub const BLOW_UP_PENALTY: f64 = 1e6;

fn d_lambda() -> f64 {
    0.1
}
fn d_max_epochs() -> usize {
    5000
}
fn d_patience() -> usize {
    200
}
fn d_val_fraction() -> f64 {
    0.1
}
fn d_budget() -> usize {
    20_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Weight of the initial-state penalty.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping; also the
    /// number of consecutive non-finite epochs treated as divergence.
    #[serde(default = "d_patience")]
    pub patience: usize,
    /// Fraction of measured frames, taken from the end, held out for validation.
    #[serde(default = "d_val_fraction")]
    pub val_fraction: f64,
    /// Seeds the parameter initialisation.
    #[serde(default)]
    pub seed: u64,
    /// Records the physics residual every this many epochs (0 disables it).
    #[serde(default)]
    pub physics_every: usize,
    /// Most tensor entries one tape segment may hold.
    #[serde(default = "d_budget")]
    pub segment_budget: usize,
}

impl TrainConfig {
    pub fn new(lr: f64) -> Self {
        TrainConfig {
            lr,
            lambda: d_lambda(),
            max_epochs: d_max_epochs(),
            patience: d_patience(),
            val_fraction: d_val_fraction(),
            seed: 0,
            physics_every: 0,
            segment_budget: d_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("train.lr must be positive, got {}", self.lr));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("train.lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return bad(format!("train.val_fraction must lie in [0, 0.5), got {}", self.val_fraction));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.segment_budget == 0 {
            return bad("train.max_epochs, train.patience and train.segment_budget must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub physics_error: Option<f64>,
}

/// CSV with columns `epoch,train_loss,val_loss,physics_error`.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,physics_error\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, opt(r.val_loss), opt(r.physics_error));
    }
    out
}

pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryRow>> {
    let bad = |l: &str| Error::CorruptHeader(format!("bad history line {l:?}"));
    let opt = |s: &str| -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some)
        }
    };
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad(l));
            }
            Ok(HistoryRow {
                epoch: f[0].parse().map_err(|_| bad(l))?,
                train_loss: f[1].parse().map_err(|_| bad(l))?,
                val_loss: opt(f[2]).map_err(|_| bad(l))?,
                physics_error: opt(f[3]).map_err(|_| bad(l))?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    Diverged,
}

/// Loss values of one parameter setting, and optionally their gradient.
#[derive(Clone, Debug)]
pub struct LossEval<T> {
    /// Data misfit over the training frames plus the weighted initial-state term.
    pub train: f64,
    pub data: f64,
    pub initial: f64,
    /// Mean misfit over the validation frames.
    pub val: Option<f64>,
    /// Euler steps taken before the rollout ended or hit the guard.
    pub steps: usize,
    pub blown: bool,
    /// Gradient of `train` in [`PercnnModel::params`] order.
    pub grads: Option<Vec<Vec<T>>>,
}

struct Pass<X, T> {
    losses: Vec<(usize, X)>,
    end: X,
    end_step: usize,
    blown: bool,
    saved: Vec<(usize, Field<T>)>,
}

#[derive(Clone, Debug)]
struct Best<T> {
    metric: f64,
    epoch: usize,
    params: Vec<Vec<T>>,
}

/// Result of a finished run; `model` carries the best-validation parameters.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: PercnnModel<T>,
    pub history: Vec<HistoryRow>,
    pub stop: StopReason,
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trainer<T: Real> {
    model: PercnnModel<T>,
    config: TrainConfig,
    data: Trajectory<T>,
    spf: usize,
    n_train: usize,
    target0: Field<T>,
    adam: Adam<T>,
    epoch: usize,
    best: Option<Best<T>>,
    since_best: usize,
    bad_streak: usize,
    history: Vec<HistoryRow>,
    system: Option<PdeSystem>,
    stop: Option<StopReason>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: PercnnModel<T>, data: Trajectory<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if data.len() < 2 {
            return Err(Error::InvalidArgument(format!("training needs 2 measured frames, got {}", data.len())));
        }
        if data.grid() != model.coarse() || data.channels() != model.channels() {
            return Err(Error::ShapeMismatch(format!(
                "measurements are {} channels on {:?}, model expects {} on {:?}",
                data.channels(),
                data.grid().extents(),
                model.channels(),
                model.coarse().extents()
            )));
        }
        let spf = model.steps_per_frame(data.dt())?;
        let n_val = (config.val_fraction * data.len() as f64).ceil() as usize;
        let n_train = data.len() - n_val;
        if n_train < 2 {
            return Err(Error::InvalidArgument(format!(
                "{} frames leave {n_train} for training after the validation split",
                data.len()
            )));
        }
        let target0 = interpolate(data.frame(0), model.fine())?;
        let adam = Adam::new(config.lr, model.params());
        Ok(Trainer {
            model,
            config,
            data,
            spf,
            n_train,
            target0,
            adam,
            epoch: 0,
            best: None,
            since_best: 0,
            bad_streak: 0,
            history: Vec::new(),
            system: None,
            stop: None,
        })
    }

    /// Attaches the governing equations; their residual is recorded in the
    /// history every [`TrainConfig::physics_every`] epochs.
    pub fn with_physics(mut self, system: PdeSystem) -> Self {
        self.system = Some(system);
        self
    }

    pub fn model(&self) -> &PercnnModel<T> {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[HistoryRow] {
        &self.history
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn steps_per_frame(&self) -> usize {
        self.spf
    }

    /// Measured frames used by the training loss, the first included.
    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_val(&self) -> usize {
        self.data.len() - self.n_train
    }

    /// Euler steps covering the training frames.
    pub fn train_steps(&self) -> usize {
        (self.n_train - 1) * self.spf
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.epoch)
    }

    fn weight(&self, j: usize) -> f64 {
        if j < self.n_train {
            1.0 / self.n_train as f64
        } else {
            1.0 / self.n_val() as f64
        }
    }

    fn forward<G: Graph<T>>(
        &self,
        g: &mut G,
        b: &Bound<G::Tensor>,
        start: G::Tensor,
        from: usize,
        to: usize,
        save_every: usize,
        save_below: usize,
    ) -> Result<Pass<G::Tensor, T>> {
        let coarse = self.model.coarse();
        let mut losses = Vec::new();
        let mut frame_loss = |g: &mut G, x: &G::Tensor, j: usize| -> Result<()> {
            let at = g.gather(x, coarse)?;
            let target = g.field(self.data.frame(j), false)?;
            losses.push((j, g.mse(&at, &target)?));
            Ok(())
        };
        if from == 0 {
            frame_loss(g, &start, 0)?;
        }
        let mut x = start;
        let (mut end_step, mut blown, mut saved) = (from, false, Vec::new());
        for k in from + 1..=to {
            let next = self.model.step(g, b, &x)?;
            if !g.value(&next).iter().all(|v| v.abs().as_f64() <= STATE_GUARD) {
                blown = true;
                break;
            }
            x = next;
            end_step = k;
            if k % self.spf == 0 {
                frame_loss(g, &x, k / self.spf)?;
            }
            if k % save_every == 0 && k < save_below {
                saved.push((k, g.to_field(&x)?));
            }
        }
        Ok(Pass { losses, end: x, end_step, blown, saved })
    }

    fn start_state<G: Graph<T>>(&self, g: &mut G, b: &Bound<G::Tensor>) -> Result<G::Tensor> {
        let ic = g.field(self.data.frame(0), false)?;
        self.model.initial_state(g, b, &ic)
    }

    /// Training objective over the full training window as one graph, with
    /// the parameters supplied as leaves.
    pub fn objective<G: Graph<T>>(&self, g: &mut G, leaves: Vec<G::Tensor>) -> Result<G::Tensor> {
        let b = self.model.bind_leaves(g, leaves)?;
        let x0 = self.start_state(g, &b)?;
        let pass = self.forward(g, &b, x0.clone(), 0, self.train_steps(), usize::MAX, 0)?;
        self.segment_objective(g, &pass, Some(&x0), None)
    }

    /// Weighted sum of the training-frame losses of `pass`, the initial-state
    /// term when `x0` is given, and `<end, adjoint>`.
    fn segment_objective<G: Graph<T>>(
        &self,
        g: &mut G,
        pass: &Pass<G::Tensor, T>,
        x0: Option<&G::Tensor>,
        adjoint: Option<&[T]>,
    ) -> Result<G::Tensor> {
        let mut terms = Vec::new();
        if let Some(x0) = x0 {
            let target = g.field(&self.target0, false)?;
            let r = g.mse(x0, &target)?;
            terms.push(g.scale(&r, T::of(self.config.lambda))?);
        }
        for (j, l) in &pass.losses {
            if *j < self.n_train {
                terms.push(g.scale(l, T::of(self.weight(*j)))?);
            }
        }
        if let Some(a) = adjoint {
            terms.push(g.dot_const(&pass.end, a)?);
        }
        let mut total = terms[0].clone();
        for t in &terms[1..] {
            total = g.add(&total, t)?;
        }
        Ok(total)
    }

    fn summarize<X>(&self, g: &impl Graph<T, Tensor = X>, pass: &Pass<X, T>, initial: f64, grads: Option<Vec<Vec<T>>>) -> LossEval<T> {
        let mut per_frame = vec![None; self.data.len()];
        for (j, l) in &pass.losses {
            per_frame[*j] = Some(g.scalar(l).as_f64());
        }
        let value = |j: usize| per_frame[j].unwrap_or(BLOW_UP_PENALTY);
        let data: f64 = (0..self.n_train).map(|j| self.weight(j) * value(j)).sum();
        let val = (self.n_train < self.data.len())
            .then(|| (self.n_train..self.data.len()).map(|j| self.weight(j) * value(j)).sum());
        LossEval {
            train: data + self.config.lambda * initial,
            data,
            initial,
            val,
            steps: pass.end_step,
            blown: pass.blown,
            grads,
        }
    }

    fn tape_entries_per_step(&self) -> usize {
        let pi = &self.model.config().pi;
        self.model.fine().len() * (2 * pi.n_layers * pi.n_channels + 5 * self.model.channels())
    }

    fn total_steps(&self) -> usize {
        (self.data.len() - 1) * self.spf
    }

    /// Loss values at the current parameters.
    pub fn loss(&self) -> Result<LossEval<T>> {
        let mut g = Eager;
        let b = self.model.bind(&mut g, false)?;
        let x0 = self.start_state(&mut g, &b)?;
        let target = g.field(&self.target0, false)?;
        let initial = g.mse(&x0, &target)?;
        let initial = g.scalar(&initial).as_f64();
        let pass = self.forward(&mut g, &b, x0, 0, self.total_steps(), usize::MAX, 0)?;
        Ok(self.summarize(&g, &pass, initial, None))
    }

    /// Loss values and the gradient of the training loss.
    pub fn gradient(&self) -> Result<LossEval<T>> {
        let seg = (self.config.segment_budget / self.tape_entries_per_step().max(1)).max(1);
        if self.total_steps() <= seg {
            self.gradient_single()
        } else {
            self.gradient_segmented(seg)
        }
    }

    fn gradient_single(&self) -> Result<LossEval<T>> {
        let mut g = Tape::new();
        let b = self.model.bind(&mut g, true)?;
        let x0 = self.start_state(&mut g, &b)?;
        let pass = self.forward(&mut g, &b, x0, 0, self.total_steps(), usize::MAX, 0)?;
        let target = g.field(&self.target0, false)?;
        let initial = g.mse(&x0, &target)?;
        let initial = g.scalar(&initial).as_f64();
        let objective = self.segment_objective(&mut g, &pass, Some(&x0), None)?;
        let mut eval = self.summarize(&g, &pass, initial, None);
        let grads = g.backward(objective)?;
        eval.grads = Some(b.leaves.iter().map(|&l| grads.get(l).map(<[T]>::to_vec).unwrap_or_default()).collect());
        Ok(eval)
    }

    fn gradient_segmented(&self, seg: usize) -> Result<LossEval<T>> {
        let mut g = Eager;
        let b = self.model.bind(&mut g, false)?;
        let x0 = self.start_state(&mut g, &b)?;
        let target = g.field(&self.target0, false)?;
        let initial = g.mse(&x0, &target)?;
        let initial = g.scalar(&initial).as_f64();
        let pass = self.forward(&mut g, &b, x0, 0, self.total_steps(), seg, self.train_steps())?;
        let mut eval = self.summarize(&g, &pass, initial, None);

        let grad_end = self.train_steps().min(pass.end_step / self.spf * self.spf);
        let mut bounds: Vec<usize> = (0..grad_end).step_by(seg).collect();
        if bounds.is_empty() {
            bounds.push(0);
        }
        let mut acc: Vec<Vec<T>> = self.model.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        let mut adjoint: Option<Vec<T>> = None;
        for (i, &a) in bounds.iter().enumerate().rev() {
            let end = bounds.get(i + 1).copied().unwrap_or(grad_end);
            let mut tape = Tape::new();
            let b = self.model.bind(&mut tape, true)?;
            let start = if a == 0 {
                self.start_state(&mut tape, &b)?
            } else {
                let state = &pass.saved.iter().find(|(k, _)| *k == a).expect("boundary state saved").1;
                tape.field(state, true)?
            };
            let seg_pass = self.forward(&mut tape, &b, start, a, end, usize::MAX, 0)?;
            let x0 = (a == 0).then_some(start);
            let objective = self.segment_objective(&mut tape, &seg_pass, x0.as_ref(), adjoint.as_deref())?;
            let mut grads = tape.backward(objective)?;
            for (sum, &l) in acc.iter_mut().zip(&b.leaves) {
                if let Some(gl) = grads.get(l) {
                    for (s, v) in sum.iter_mut().zip(gl) {
                        *s = *s + *v;
                    }
                }
            }
            adjoint = if a == 0 { None } else { grads.take(start) };
        }
        eval.grads = Some(acc);
        Ok(eval)
    }

    fn update_stop(&mut self) {
        self.stop = if self.bad_streak >= self.config.patience {
            Some(StopReason::Diverged)
        } else if self.since_best >= self.config.patience {
            Some(StopReason::EarlyStopped)
        } else if self.epoch >= self.config.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
    }

    /// One full rollout and one optimizer step.
    pub fn step(&mut self) -> Result<HistoryRow> {
        let eval = self.gradient()?;
        self.epoch += 1;
        let physics = match (&self.system, self.config.physics_every) {
            (Some(sys), every) if every > 0 && self.epoch.is_multiple_of(every) => Some(self.physics(sys)),
            _ => None,
        };
        let metric = eval.val.unwrap_or(eval.train);
        if metric.is_finite() && self.best.as_ref().is_none_or(|b| metric < b.metric) {
            let params = self.model.params().iter().map(|p| p.value.clone()).collect();
            self.best = Some(Best { metric, epoch: self.epoch, params });
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let grads = eval.grads.expect("gradient requested");
        let finite = eval.train.is_finite() && grads.iter().flatten().all(|v| v.is_finite());
        if finite {
            self.bad_streak = 0;
            self.adam.step(self.model.params_mut(), &grads);
            self.clamp_theta();
        } else {
            self.bad_streak += 1;
        }
        let row = HistoryRow { epoch: self.epoch, train_loss: eval.train, val_loss: eval.val, physics_error: physics };
        self.history.push(row.clone());
        self.update_stop();
        Ok(row)
    }

    fn clamp_theta(&mut self) {
        for p in self.model.params_mut().iter_mut().filter(|p| p.name == "highway.theta") {
            for v in &mut p.value {
                *v = v.max(T::of(-THETA_LIMIT)).min(T::of(THETA_LIMIT));
            }
        }
    }

    fn physics(&self, system: &PdeSystem) -> f64 {
        self.model
            .predict(self.data.frame(0), self.train_steps())
            .and_then(|t| physics_error(&t, system))
            .map(|c| c.mean())
            .unwrap_or(f64::INFINITY)
    }

    /// Runs until a stop condition holds.
    pub fn run(&mut self) -> Result<StopReason> {
        self.update_stop();
        while self.stop.is_none() {
            self.step()?;
        }
        Ok(self.stop.unwrap())
    }

    /// Runs at most `epochs` more epochs; returns the stop reason if one was reached.
    pub fn run_for(&mut self, epochs: usize) -> Result<Option<StopReason>> {
        self.update_stop();
        for _ in 0..epochs {
            if self.stop.is_some() {
                break;
            }
            self.step()?;
        }
        Ok(self.stop)
    }

    /// Model with the best-validation parameters seen so far.
    pub fn best_model(&self) -> Result<PercnnModel<T>> {
        let mut model = self.model.clone();
        if let Some(best) = &self.best {
            for (p, v) in model.params().iter().map(|p| p.name.clone()).collect::<Vec<_>>().iter().zip(&best.params) {
                model.set_param(p, v.clone())?;
            }
        }
        Ok(model)
    }

    pub fn finish(self) -> Result<TrainOutcome<T>> {
        let model = self.best_model()?;
        Ok(TrainOutcome {
            model,
            history: self.history,
            stop: self.stop.unwrap_or(StopReason::MaxEpochs),
            best_epoch: self.best.as_ref().map(|b| b.epoch),
            best_loss: self.best.as_ref().map(|b| b.metric),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let to64 = |v: &Vec<T>| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let m = &self.model;
        Checkpoint {
            meta: CheckpointMeta {
                model: m.config().clone(),
                channels: m.channels(),
                coarse: m.coarse().clone(),
                fine: m.fine().clone(),
                train: self.config.clone(),
                epoch: self.epoch,
                adam_step: self.adam.t,
                best_loss: self.best.as_ref().map(|b| b.metric),
                best_epoch: self.best.as_ref().map(|b| b.epoch),
                since_best: self.since_best,
                bad_streak: self.bad_streak,
                seed: self.config.seed,
                stop: self.stop,
                history: history_csv(&self.history),
                window_steps: self.total_steps(),
                system: self.system.clone(),
            },
            params: m
                .params()
                .iter()
                .map(|p| Param { name: p.name.clone(), dims: p.dims.clone(), value: to64(&p.value) })
                .collect(),
            adam_m: self.adam.m.iter().map(to64).collect(),
            adam_v: self.adam.v.iter().map(to64).collect(),
            best_params: self.best.as_ref().map(|b| b.params.iter().map(to64).collect()),
            initial: self.data.frame(0).data().iter().map(|x| x.as_f64()).collect(),
        }
    }

    /// Continues a run from `ckpt`; `config` may change the stopping limits.
    pub fn resume(ckpt: &Checkpoint, data: Trajectory<T>, config: Option<TrainConfig>) -> Result<Self> {
        let model = ckpt.model::<T>()?;
        let mut t = Trainer::new(model, data, config.unwrap_or_else(|| ckpt.meta.train.clone()))?;
        t.system = ckpt.meta.system.clone();
        let initial: Vec<f64> = t.data.frame(0).data().iter().map(|x| x.as_f64()).collect();
        if initial != ckpt.initial {
            return Err(Error::InvalidArgument("measurements differ from the ones the checkpoint was trained on".into()));
        }
        let from64 = |v: &Vec<f64>| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        let meta = &ckpt.meta;
        t.adam = Adam { lr: t.config.lr, t: meta.adam_step, m: ckpt.adam_m.iter().map(from64).collect(), v: ckpt.adam_v.iter().map(from64).collect() };
        if t.adam.m.len() != t.model.params().len() || t.adam.v.len() != t.model.params().len() {
            return Err(Error::ShapeMismatch("optimizer state does not match the parameters".into()));
        }
        t.epoch = meta.epoch;
        t.since_best = meta.since_best;
        t.bad_streak = meta.bad_streak;
        t.history = parse_history_csv(&meta.history)?;
        t.best = match (&ckpt.best_params, meta.best_loss, meta.best_epoch) {
            (Some(p), Some(metric), Some(epoch)) => Some(Best { metric, epoch, params: p.iter().map(from64).collect() }),
            _ => None,
        };
        t.update_stop();
        Ok(t)
    }
}

/// Trains from scratch until a stop condition holds.
pub fn train<T: Real>(model: PercnnModel<T>, data: Trajectory<T>, config: TrainConfig) -> Result<TrainOutcome<T>> {
    let mut t = Trainer::new(model, data, config)?;
    t.run()?;
    t.finish()
}
