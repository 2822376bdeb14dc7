//! The recurrent network: initial state generator, product block, physics
//! highway and the forward-Euler rollout.
//!
//! Forward code is written against [`Graph`], so training (on a tape) and
//! inference (eager) run the same arithmetic and agree bit for bit.

mod config;

pub use config::{FrozenChannel, HighwayConfig, IsgConfig, ModelConfig, PiBlockConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Eager, Graph, Shape};
use crate::error::{Error, Result};
use crate::field::{node_stride, Field, GridSpec, PaddingMode, Trajectory};
use crate::scalar::Real;
use crate::stencil::{DiffOp, Stencil};

/// Highway parameters are kept in `[-THETA_LIMIT, THETA_LIMIT]` so the
/// sigmoid never saturates to a bound in `f64`.
pub const THETA_LIMIT: f64 = 30.0;

/// Width of fixed-stencil filters.
const STENCIL_SIZE: usize = 5;

/// Named array of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Vec<T>,
}

impl<T> Param<T> {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

enum Init {
    Uniform(f64),
    Zero,
}

/// Tensors of one binding of the model's arrays to a graph.
pub struct Bound<X> {
    /// Parameter leaves in [`PercnnModel::params`] order.
    pub leaves: Vec<X>,
    isg: Option<[X; 6]>,
    layers: Vec<(X, Option<X>)>,
    mix: (X, Option<X>),
    highway: Option<(X, X)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PercnnModel<T> {
    config: ModelConfig,
    channels: usize,
    coarse: GridSpec,
    fine: GridSpec,
    params: Vec<Param<T>>,
    buffers: Vec<Param<T>>,
}

fn filter_dims(c_out: usize, c_in: usize, k: usize, ndim: usize) -> Vec<usize> {
    let mut d = vec![c_out, c_in];
    d.extend(std::iter::repeat_n(k, ndim));
    d
}

fn layout(config: &ModelConfig, s: usize, ndim: usize) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let fan = |c: usize, k: usize| 1.0 / ((c * k.pow(ndim as u32)) as f64).sqrt();
    if config.isg.trainable {
        let (h, k) = (config.isg.hidden, config.isg.kernel);
        out.push(("isg.conv1.weight".into(), filter_dims(h, s, k, ndim), Init::Uniform(fan(s, k))));
        out.push(("isg.conv1.bias".into(), vec![h], Init::Uniform(fan(s, k))));
        out.push(("isg.conv2.weight".into(), filter_dims(h, h, k, ndim), Init::Uniform(fan(h, k))));
        out.push(("isg.conv2.bias".into(), vec![h], Init::Uniform(fan(h, k))));
        out.push(("isg.out.weight".into(), filter_dims(s, h, k, ndim), Init::Zero));
        out.push(("isg.out.bias".into(), vec![s], Init::Zero));
    }
    let pi = &config.pi;
    for l in 0..pi.n_layers {
        if l == 0 && pi.frozen_first_layer.is_some() {
            continue;
        }
        let bound = fan(s, pi.kernel);
        out.push((format!("pi.layer{l}.weight"), filter_dims(pi.n_channels, s, pi.kernel, ndim), Init::Uniform(bound)));
        if pi.bias {
            out.push((format!("pi.layer{l}.bias"), vec![pi.n_channels], Init::Uniform(bound)));
        }
    }
    out.push(("pi.mix.weight".into(), filter_dims(s, pi.n_channels, 1, ndim), Init::Uniform(0.02)));
    if pi.bias {
        out.push(("pi.mix.bias".into(), vec![s], Init::Zero));
    }
    if config.highway.enabled {
        out.push(("highway.theta".into(), vec![s], Init::Zero));
    }
    out
}

/// Places each stencil in block `(out, in)` of a `[c_out, c_in, 5, ...]` filter bank.
fn stencil_bank<T: Real>(entries: &[(usize, usize, DiffOp)], c_out: usize, c_in: usize, ndim: usize, dx: f64) -> Result<Param<T>> {
    let kk = STENCIL_SIZE.pow(ndim as u32);
    let mut w = vec![T::zero(); c_out * c_in * kk];
    for &(o, i, op) in entries {
        let st = Stencil::new(op, ndim)?;
        let weights: Vec<T> = st.weights(dx);
        let block = &mut w[(o * c_in + i) * kk..(o * c_in + i + 1) * kk];
        if st.size() == STENCIL_SIZE {
            block.copy_from_slice(&weights);
        } else {
            block[kk / 2] = weights[0];
        }
    }
    Ok(Param { name: String::new(), dims: filter_dims(c_out, c_in, STENCIL_SIZE, ndim), value: w })
}

impl<T: Real> PercnnModel<T> {
    /// Randomly initialised model; the highway bounds must already be resolved
    /// in `config.highway.upper` when the highway is enabled.
    pub fn new(config: ModelConfig, channels: usize, coarse: GridSpec, fine: GridSpec, seed: u64) -> Result<Self> {
        let ndim = Self::check_setup(&config, channels, &coarse, &fine)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout(&config, channels, ndim)
            .into_iter()
            .map(|(name, dims, init)| {
                let n: usize = dims.iter().product();
                let value = match init {
                    Init::Zero => vec![T::zero(); n],
                    Init::Uniform(b) => (0..n).map(|_| T::of(rng.random_range(-b..b))).collect(),
                };
                Param { name, dims, value }
            })
            .collect();
        let buffers = Self::make_buffers(&config, channels, &fine)?;
        Ok(PercnnModel { config, channels, coarse, fine, params, buffers })
    }

    /// Rebuilds a model from stored arrays, checking them against the layout.
    pub fn from_params(
        config: ModelConfig,
        channels: usize,
        coarse: GridSpec,
        fine: GridSpec,
        params: Vec<Param<T>>,
    ) -> Result<Self> {
        let ndim = Self::check_setup(&config, channels, &coarse, &fine)?;
        let expected = layout(&config, channels, ndim);
        if expected.len() != params.len()
            || expected.iter().zip(&params).any(|((n, d, _), p)| *n != p.name || *d != p.dims || p.value.len() != p.dims.iter().product::<usize>())
        {
            return Err(Error::ShapeMismatch("stored parameters do not match the model layout".into()));
        }
        if params.iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        let buffers = Self::make_buffers(&config, channels, &fine)?;
        Ok(PercnnModel { config, channels, coarse, fine, params, buffers })
    }

    fn check_setup(config: &ModelConfig, channels: usize, coarse: &GridSpec, fine: &GridSpec) -> Result<usize> {
        if coarse.ndim() != fine.ndim() {
            return Err(Error::ShapeMismatch("coarse and fine grids differ in dimension".into()));
        }
        node_stride(coarse, fine)?;
        let ndim = fine.ndim();
        config.validate(channels, ndim)?;
        if config.highway.enabled && config.highway.upper.is_none() {
            return Err(Error::Config("highway bounds are not resolved".into()));
        }
        Ok(ndim)
    }

    fn make_buffers(config: &ModelConfig, s: usize, fine: &GridSpec) -> Result<Vec<Param<T>>> {
        let ndim = fine.ndim();
        let mut out = Vec::new();
        if let Some(frozen) = &config.pi.frozen_first_layer {
            let entries: Vec<_> = frozen.iter().enumerate().map(|(o, f)| (o, f.input, f.op)).collect();
            let mut p = stencil_bank(&entries, frozen.len(), s, ndim, fine.dx())?;
            p.name = "pi.layer0.stencil".into();
            out.push(p);
        }
        if config.highway.enabled {
            let entries: Vec<_> = (0..s).map(|c| (c, c, DiffOp::Laplacian)).collect();
            let mut p = stencil_bank(&entries, s, s, ndim, fine.dx())?;
            p.name = "highway.stencil".into();
            out.push(p);
        }
        Ok(out)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coarse(&self) -> &GridSpec {
        &self.coarse
    }

    pub fn fine(&self) -> &GridSpec {
        &self.fine
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    /// Trainable arrays in a fixed order.
    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Fixed stencil filters (frozen derivative layer, highway Laplacian).
    pub fn buffers(&self) -> &[Param<T>] {
        &self.buffers
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn set_param(&mut self, name: &str, value: Vec<T>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))?;
        if p.value.len() != value.len() {
            return Err(Error::ShapeMismatch(format!("{name} holds {} values, got {}", p.value.len(), value.len())));
        }
        p.value = value;
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    /// Highway coefficient bounds `(lo, hi)` per channel.
    pub fn highway_bounds(&self) -> Vec<(f64, f64)> {
        match (&self.config.highway.upper, self.config.highway.enabled) {
            (Some(upper), true) => upper.iter().map(|&u| (0.0, u)).collect(),
            _ => Vec::new(),
        }
    }

    /// Current diffusion coefficients of the highway.
    pub fn highway_coefficients(&self) -> Vec<f64> {
        let Some(theta) = self.param("highway.theta") else { return Vec::new() };
        self.highway_bounds()
            .iter()
            .zip(&theta.value)
            .map(|(&(lo, hi), &t)| {
                let s = crate::autodiff::sigmoid(t);
                (T::of(lo) + (T::of(hi) - T::of(lo)) * s).as_f64()
            })
            .collect()
    }

    /// Model steps per measurement interval `frame_dt`.
    pub fn steps_per_frame(&self, frame_dt: f64) -> Result<usize> {
        let r = frame_dt / self.config.dt;
        let n = r.round();
        if n < 1.0 || (r - n).abs() > 1e-9 * r {
            return Err(Error::TimeMisalignment(format!(
                "frame interval {frame_dt} is not a multiple of the model step {}",
                self.config.dt
            )));
        }
        Ok(n as usize)
    }

    /// Registers the model arrays on `g`; parameters become leaves with the
    /// given `requires_grad`, stencil buffers are constants.
    pub fn bind<G: Graph<T>>(&self, g: &mut G, requires_grad: bool) -> Result<Bound<G::Tensor>> {
        let leaves = self
            .params
            .iter()
            .map(|p| g.leaf(p.value.clone(), Shape::array(p.dims.clone()), requires_grad))
            .collect::<Result<Vec<_>>>()?;
        self.bind_leaves(g, leaves)
    }

    /// Like [`PercnnModel::bind`] with caller-supplied parameter leaves, in
    /// [`PercnnModel::params`] order.
    pub fn bind_leaves<G: Graph<T>>(&self, g: &mut G, leaves: Vec<G::Tensor>) -> Result<Bound<G::Tensor>> {
        if leaves.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!("{} leaves for {} parameters", leaves.len(), self.params.len())));
        }
        for (p, t) in self.params.iter().zip(&leaves) {
            if g.shape(t).dims() != p.dims.as_slice() {
                return Err(Error::ShapeMismatch(format!("leaf for {} has dims {:?}", p.name, g.shape(t).dims())));
            }
        }
        let get = |name: &str| self.index(name).map(|i| leaves[i].clone());
        let isg = if self.config.isg.trainable {
            let names = ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "out.weight", "out.bias"];
            let t: Vec<G::Tensor> = names.iter().map(|n| get(&format!("isg.{n}")).unwrap()).collect();
            Some(t.try_into().unwrap_or_else(|_| unreachable!()))
        } else {
            None
        };
        let mut layers = Vec::new();
        for l in 0..self.config.pi.n_layers {
            if l == 0 && self.config.pi.frozen_first_layer.is_some() {
                let b = &self.buffers[0];
                layers.push((g.leaf(b.value.clone(), Shape::array(b.dims.clone()), false)?, None));
            } else {
                layers.push((get(&format!("pi.layer{l}.weight")).unwrap(), get(&format!("pi.layer{l}.bias"))));
            }
        }
        let mix = (get("pi.mix.weight").unwrap(), get("pi.mix.bias"));
        let highway = if self.config.highway.enabled {
            let b = self.buffers.last().unwrap();
            let filter = g.leaf(b.value.clone(), Shape::array(b.dims.clone()), false)?;
            let (lo, hi): (Vec<T>, Vec<T>) = self.highway_bounds().iter().map(|&(l, h)| (T::of(l), T::of(h))).unzip();
            let coeff = g.bounded(&get("highway.theta").unwrap(), &lo, &hi)?;
            Some((filter, coeff))
        } else {
            None
        };
        Ok(Bound { leaves, isg, layers, mix, highway })
    }

    fn check_coarse(&self, f: &Field<T>) -> Result<()> {
        if f.grid() != &self.coarse || f.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "initial measurement is {} channels on {:?}, model expects {} on {:?}",
                f.channels(),
                f.grid().extents(),
                self.channels,
                self.coarse.extents()
            )));
        }
        Ok(())
    }

    /// Fine initial state from a coarse measurement tensor.
    pub fn initial_state<G: Graph<T>>(&self, g: &mut G, b: &Bound<G::Tensor>, coarse_ic: &G::Tensor) -> Result<G::Tensor> {
        let up = g.upsample(coarse_ic, &self.fine)?;
        let Some([w1, b1, w2, b2, w3, b3]) = &b.isg else { return Ok(up) };
        let h = g.conv(&up, w1, Some(b1), &self.config.bc)?;
        let h = g.tanh(&h)?;
        let h = g.conv(&h, w2, Some(b2), &PaddingMode::Periodic)?;
        let corr = g.conv(&h, w3, Some(b3), &PaddingMode::Periodic)?;
        g.add(&up, &corr)
    }

    /// Product-block output `Σ_c f_c Π_l (D^(c,l) ⋆ u)`.
    pub fn pi_block<G: Graph<T>>(&self, g: &mut G, b: &Bound<G::Tensor>, state: &G::Tensor) -> Result<G::Tensor> {
        let mut prod: Option<G::Tensor> = None;
        for (w, bias) in &b.layers {
            let y = g.conv(state, w, bias.as_ref(), &self.config.bc)?;
            prod = Some(match prod {
                None => y,
                Some(p) => g.hadamard(&p, &y)?,
            });
        }
        g.conv(&prod.unwrap(), &b.mix.0, b.mix.1.as_ref(), &PaddingMode::Periodic)
    }

    /// Learned right-hand side: product block plus the diffusion highway.
    pub fn rhs_hat<G: Graph<T>>(&self, g: &mut G, b: &Bound<G::Tensor>, state: &G::Tensor) -> Result<G::Tensor> {
        let pi = self.pi_block(g, b, state)?;
        match &b.highway {
            None => Ok(pi),
            Some((filter, coeff)) => {
                let lap = g.conv(state, filter, None, &self.config.bc)?;
                let diff = g.channel_scale(&lap, coeff)?;
                g.add(&pi, &diff)
            }
        }
    }

    /// One forward-Euler step `u + dt F̂(u)`.
    pub fn step<G: Graph<T>>(&self, g: &mut G, b: &Bound<G::Tensor>, state: &G::Tensor) -> Result<G::Tensor> {
        let f = self.rhs_hat(g, b, state)?;
        g.axpy(state, T::of(self.config.dt), &f)
    }

    /// Fine initial state for a coarse measurement, evaluated eagerly.
    pub fn initial_field(&self, coarse_ic: &Field<T>) -> Result<Field<T>> {
        self.check_coarse(coarse_ic)?;
        let mut g = Eager;
        let b = self.bind(&mut g, false)?;
        let x = g.field(coarse_ic, false)?;
        let x0 = self.initial_state(&mut g, &b, &x)?;
        g.to_field(&x0)
    }

    /// `F̂(state)` on the fine grid, evaluated eagerly.
    pub fn rhs_hat_field(&self, state: &Field<T>) -> Result<Field<T>> {
        self.check_fine(state)?;
        let mut g = Eager;
        let b = self.bind(&mut g, false)?;
        let x = g.field(state, false)?;
        let f = self.rhs_hat(&mut g, &b, &x)?;
        g.to_field(&f)
    }

    fn check_fine(&self, f: &Field<T>) -> Result<()> {
        if f.grid() != &self.fine || f.channels() != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "state is {} channels on {:?}, model runs {} on {:?}",
                f.channels(),
                f.grid().extents(),
                self.channels,
                self.fine.extents()
            )));
        }
        Ok(())
    }

    /// Inference rollout: `n_steps` Euler steps after the generated initial state.
    pub fn predict(&self, coarse_ic: &Field<T>, n_steps: usize) -> Result<Trajectory<T>> {
        let x0 = self.initial_field(coarse_ic)?;
        self.rollout_from(&x0, n_steps)
    }

    /// Euler rollout from a given fine state.
    pub fn rollout_from(&self, x0: &Field<T>, n_steps: usize) -> Result<Trajectory<T>> {
        self.check_fine(x0)?;
        let mut g = Eager;
        let b = self.bind(&mut g, false)?;
        let mut x = g.field(x0, false)?;
        let mut frames = vec![x0.clone()];
        for step in 1..=n_steps {
            x = self.step(&mut g, &b, &x)?;
            let f = g.to_field(&x)?;
            if !f.is_finite() {
                return Err(Error::RolloutBlowUp { step, max_abs: f64::INFINITY });
            }
            frames.push(f);
        }
        Trajectory::new(frames, self.config.dt, 0.0)
    }
}
