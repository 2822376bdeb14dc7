//! Ground-truth data generation: Gray-Scott and Burgers right-hand sides
//! with fourth-order stencils, advanced by classical RK4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, GridSpec, PaddingMode, Trajectory};
use crate::scalar::Real;
use crate::stencil::{ddx, laplacian};

/// States with any |value| above this abort the integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    GrayScott2d,
    GrayScott3d,
    Burgers2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    /// `u_t = D Δu + R(u)` with `R = [-uv² + f(1-u), uv² - (f+κ)v]`.
    GrayScott { mu_u: f64, mu_v: f64, kappa: f64, feed: f64 },
    /// `u_t + u·∇u = ν Δu` for the velocity pair `(u, v)`.
    Burgers { nu: f64 },
}

/// Governing equations of one benchmark dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSystem {
    pub ndim: usize,
    pub dynamics: Dynamics,
    #[serde(default = "periodic")]
    pub bc: PaddingMode,
}

fn periodic() -> PaddingMode {
    PaddingMode::Periodic
}

impl PdeSystem {
    pub fn gray_scott(ndim: usize, mu_u: f64, mu_v: f64, kappa: f64, feed: f64) -> Result<Self> {
        let sys = PdeSystem {
            ndim,
            dynamics: Dynamics::GrayScott { mu_u, mu_v, kappa, feed },
            bc: PaddingMode::Periodic,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn burgers(nu: f64) -> Result<Self> {
        let sys = PdeSystem {
            ndim: 2,
            dynamics: Dynamics::Burgers { nu },
            bc: PaddingMode::Periodic,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// 2D Gray-Scott dataset parameters.
    pub fn gs2d() -> Self {
        Self::gray_scott(2, 2e-5, 5e-6, 0.06, 0.04).unwrap()
    }

    /// 3D Gray-Scott dataset parameters.
    pub fn gs3d() -> Self {
        Self::gray_scott(3, 0.2, 0.1, 0.055, 0.025).unwrap()
    }

    /// 2D Burgers dataset parameters.
    pub fn burgers2d() -> Self {
        Self::burgers(0.005).unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.ndim) {
            return Err(Error::InvalidArgument(format!("unsupported dimension {}", self.ndim)));
        }
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        match self.dynamics {
            Dynamics::GrayScott { mu_u, mu_v, kappa, feed } => {
                nonneg("mu_u", mu_u)?;
                nonneg("mu_v", mu_v)?;
                if !(kappa.is_finite() && feed.is_finite()) {
                    return Err(Error::InvalidArgument("reaction rates must be finite".into()));
                }
            }
            Dynamics::Burgers { nu } => {
                nonneg("nu", nu)?;
                if self.ndim != 2 {
                    return Err(Error::InvalidArgument("Burgers is defined for 2D grids".into()));
                }
            }
        }
        self.bc.check_channels(self.channels())
    }

    pub fn kind(&self) -> SystemKind {
        match (&self.dynamics, self.ndim) {
            (Dynamics::GrayScott { .. }, 3) => SystemKind::GrayScott3d,
            (Dynamics::GrayScott { .. }, _) => SystemKind::GrayScott2d,
            (Dynamics::Burgers { .. }, _) => SystemKind::Burgers2d,
        }
    }

    /// State components; two for every supported system.
    pub fn channels(&self) -> usize {
        2
    }

    /// Diffusion coefficient per channel.
    pub fn diffusion(&self) -> Vec<f64> {
        match self.dynamics {
            Dynamics::GrayScott { mu_u, mu_v, .. } => vec![mu_u, mu_v],
            Dynamics::Burgers { nu } => vec![nu, nu],
        }
    }

    fn check_state<T: Real>(&self, u: &Field<T>) -> Result<()> {
        if u.channels() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "system expects {} channels, state has {}",
                self.channels(),
                u.channels()
            )));
        }
        if u.grid().ndim() != self.ndim {
            return Err(Error::ShapeMismatch(format!(
                "system is {}D, state is {}D",
                self.ndim,
                u.grid().ndim()
            )));
        }
        Ok(())
    }
}

/// Time derivative `F(u)` of the system at state `u`.
pub fn rhs<T: Real>(system: &PdeSystem, u: &Field<T>) -> Result<Field<T>> {
    system.check_state(u)?;
    let lap = laplacian(u, &system.bc)?;
    let n = u.grid().len();
    let mut out = Field::zeros(u.grid().clone(), 2);
    match system.dynamics {
        Dynamics::GrayScott { mu_u, mu_v, kappa, feed } => {
            let (mu_u, mu_v, kappa, feed) = (T::of(mu_u), T::of(mu_v), T::of(kappa), T::of(feed));
            let (uu, vv) = (u.channel(0), u.channel(1));
            let (lu, lv) = (lap.channel(0), lap.channel(1));
            let data = out.data_mut();
            for i in 0..n {
                let uvv = uu[i] * vv[i] * vv[i];
                data[i] = mu_u * lu[i] - uvv + feed * (T::one() - uu[i]);
                data[n + i] = mu_v * lv[i] + uvv - (feed + kappa) * vv[i];
            }
        }
        Dynamics::Burgers { nu } => {
            let nu = T::of(nu);
            let gx = ddx(u, 0, &system.bc)?;
            let gy = ddx(u, 1, &system.bc)?;
            let (uu, vv) = (u.channel(0), u.channel(1));
            let data = out.data_mut();
            for c in 0..2 {
                let (l, x, y) = (lap.channel(c), gx.channel(c), gy.channel(c));
                for i in 0..n {
                    data[c * n + i] = nu * l[i] - (uu[i] * x[i] + vv[i] * y[i]);
                }
            }
        }
    }
    Ok(out)
}

fn check_stage<T: Real>(f: &Field<T>, stage: usize) -> Result<()> {
    let m = f.max_abs();
    if !f.is_finite() || m.as_f64() > BLOW_UP_THRESHOLD {
        return Err(Error::BlowUp {
            step: 0,
            stage,
            max_abs: if f.is_finite() { m.as_f64() } else { f64::INFINITY },
        });
    }
    Ok(())
}

/// Classical RK4 step for an arbitrary right-hand side.
pub fn rk4_step_by<T: Real>(
    u: &Field<T>,
    dt: f64,
    mut f: impl FnMut(&Field<T>) -> Result<Field<T>>,
) -> Result<Field<T>> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(u.clone());
    }
    let h = T::of(dt);
    let half = T::of(0.5 * dt);
    let k1 = f(u)?;
    check_stage(&k1, 1)?;
    let k2 = f(&u.axpy(half, &k1))?;
    check_stage(&k2, 2)?;
    let k3 = f(&u.axpy(half, &k2))?;
    check_stage(&k3, 3)?;
    let k4 = f(&u.axpy(h, &k3))?;
    check_stage(&k4, 4)?;
    let sixth = h / T::of(6.0);
    let two = T::of(2.0);
    let mut next = u.clone();
    let (a, b, c, d) = (k1.data(), k2.data(), k3.data(), k4.data());
    for (i, v) in next.data_mut().iter_mut().enumerate() {
        *v = *v + sixth * (a[i] + two * b[i] + two * c[i] + d[i]);
    }
    check_stage(&next, 5)?;
    Ok(next)
}

pub fn rk4_step<T: Real>(system: &PdeSystem, u: &Field<T>, dt: f64) -> Result<Field<T>> {
    rk4_step_by(u, dt, |x| rhs(system, x))
}

/// Integrates `n_steps` RK4 steps, recording every `record_every`-th state.
pub fn generate<T: Real>(
    system: &PdeSystem,
    ic: &Field<T>,
    dt: f64,
    n_steps: usize,
    record_every: usize,
) -> Result<Trajectory<T>> {
    system.validate()?;
    system.check_state(ic)?;
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be at least 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let mut frames = vec![ic.clone()];
    let mut u = ic.clone();
    for step in 1..=n_steps {
        u = rk4_step(system, &u, dt).map_err(|e| match e {
            Error::BlowUp { stage, max_abs, .. } => Error::BlowUp { step, stage, max_abs },
            other => other,
        })?;
        if step % record_every == 0 {
            frames.push(u.clone());
        }
    }
    Trajectory::new(frames, dt * record_every as f64, 0.0)
}

/// Reproducible initial condition for `system` on `grid`.
///
/// Gray-Scott: background `(1, 0)` with three Gaussian blobs reaching
/// `(0.5, 0.25)`. Burgers: random Fourier modes with `|k| <= 4`, zero mean,
/// rescaled so `max |u| = 0.7` per channel.
pub fn default_ic<T: Real>(system: &PdeSystem, grid: &GridSpec, seed: u64) -> Result<Field<T>> {
    if grid.ndim() != system.ndim {
        return Err(Error::ShapeMismatch(format!(
            "{}D grid for a {}D system",
            grid.ndim(),
            system.ndim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ndim = grid.ndim();
    let lengths: Vec<f64> = (0..ndim).map(|a| grid.domain_length(a)).collect();
    let pos = |coords: &[usize]| -> Vec<f64> { coords.iter().map(|&i| i as f64 * grid.dx()).collect() };
    match system.dynamics {
        Dynamics::GrayScott { .. } => {
            let centers: Vec<Vec<f64>> = (0..3)
                .map(|_| lengths.iter().map(|&l| rng.random::<f64>() * l).collect())
                .collect();
            let sigma = 0.05 * lengths[0];
            let blob = |x: &[f64]| -> f64 {
                let s: f64 = centers
                    .iter()
                    .map(|c| {
                        let r2: f64 = (0..ndim)
                            .map(|a| {
                                let d = (x[a] - c[a]).rem_euclid(lengths[a]);
                                d.min(lengths[a] - d).powi(2)
                            })
                            .sum();
                        (-r2 / (2.0 * sigma * sigma)).exp()
                    })
                    .sum();
                s.min(1.0)
            };
            Field::from_fn(grid.clone(), 2, |c, x| {
                let g = blob(&pos(x));
                T::of(if c == 0 { 1.0 - 0.5 * g } else { 0.25 * g })
            })
        }
        Dynamics::Burgers { .. } => {
            let mut channels = Vec::with_capacity(2);
            for _ in 0..2 {
                let mut modes = Vec::new();
                for kx in -4i32..=4 {
                    for ky in -4i32..=4 {
                        let k2 = kx * kx + ky * ky;
                        if k2 == 0 || k2 > 16 {
                            continue;
                        }
                        let amp: f64 = rng.sample::<f64, _>(StandardNormal) / (k2 as f64).sqrt();
                        let phase = rng.random::<f64>() * std::f64::consts::TAU;
                        modes.push((kx as f64, ky as f64, amp, phase));
                    }
                }
                let raw: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        let x = pos(&grid.coords(i));
                        modes
                            .iter()
                            .map(|&(kx, ky, a, p)| {
                                let arg = std::f64::consts::TAU * (kx * x[0] / lengths[0] + ky * x[1] / lengths[1]);
                                a * (arg + p).cos()
                            })
                            .sum()
                    })
                    .collect();
                let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                channels.extend(raw.into_iter().map(|v| T::of(0.7 * v / peak)));
            }
            Field::new(grid.clone(), 2, channels)
        }
    }
}
