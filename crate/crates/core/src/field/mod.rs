//! Grid fields, trajectories and the operations shared by every other module:
//! boundary padding, node subsampling, interpolation, noise corruption and
//! the binary file formats.

mod io;
mod noise;
mod pad;
mod resample;

pub use io::{load_field, load_traj, read_field, read_traj, save_field, save_traj, write_field, write_traj};
pub use noise::add_noise;
pub use pad::{crop, pad, PaddingMode};
pub use resample::{downsample, interpolate, node_stride};

pub(crate) use pad::{pad_channel, pad_channel_adjoint, AxisRule};
pub(crate) use resample::{resample_all, resample_all_adjoint, AxisMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest node count per axis; the 5-point stencils need it.
pub const MIN_EXTENT: usize = 5;

/// Uniform periodic Cartesian grid. Node `i` along an axis sits at `i * dx`;
/// the period is `extent * dx` (no duplicated endpoint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    extents: Vec<usize>,
    dx: f64,
}

impl GridSpec {
    pub fn new(extents: Vec<usize>, dx: f64) -> Result<Self> {
        if !(2..=3).contains(&extents.len()) {
            return Err(Error::InvalidArgument(format!(
                "grid must be 2D or 3D, got {} axes",
                extents.len()
            )));
        }
        if let Some(&n) = extents.iter().find(|&&n| n < MIN_EXTENT) {
            return Err(Error::InvalidArgument(format!(
                "grid extent {n} is below the minimum of {MIN_EXTENT}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {dx}")));
        }
        Ok(GridSpec { extents, dx })
    }

    /// `n^ndim` grid with spacing `dx`.
    pub fn cube(ndim: usize, n: usize, dx: f64) -> Result<Self> {
        GridSpec::new(vec![n; ndim], dx)
    }

    /// Grid whose period along every axis is `length`.
    pub fn with_length(extents: Vec<usize>, length: f64) -> Result<Self> {
        let n = *extents.first().unwrap_or(&1) as f64;
        GridSpec::new(extents, length / n)
    }

    pub fn ndim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_extent(&self) -> usize {
        self.extents.iter().copied().min().unwrap_or(0)
    }

    pub fn domain_length(&self, axis: usize) -> f64 {
        self.extents[axis] as f64 * self.dx
    }

    /// Row-major strides of the spatial layout.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.extents)
    }

    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.ndim()];
        for a in (0..self.ndim()).rev() {
            out[a] = flat % self.extents[a];
            flat /= self.extents[a];
        }
        out
    }

    /// Extents grown by `2 * width` on every axis; used for padded buffers.
    pub(crate) fn grown(&self, width: usize) -> GridSpec {
        GridSpec {
            extents: self.extents.iter().map(|n| n + 2 * width).collect(),
            dx: self.dx,
        }
    }

    pub(crate) fn shrunk(&self, width: usize) -> Result<GridSpec> {
        let extents = self
            .extents
            .iter()
            .map(|&n| n.checked_sub(2 * width))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidArgument(format!("cannot crop {width} from {:?}", self.extents)))?;
        Ok(GridSpec { extents, dx: self.dx })
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// One snapshot of an `s`-component state on a grid. Channel-major, then
/// row-major over the spatial axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: GridSpec,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: GridSpec, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("field needs at least one channel".into()));
        }
        if data.len() != channels * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field data has {} values, expected {} x {}",
                data.len(),
                channels,
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field data".into()));
        }
        Ok(Field { grid, channels, data })
    }

    /// Constructor for kernels whose output is finite by construction.
    pub(crate) fn from_raw(grid: GridSpec, channels: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * grid.len());
        Field { grid, channels, data }
    }

    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        let n = channels * grid.len();
        Field::from_raw(grid, channels, vec![T::zero(); n])
    }

    pub fn constant(grid: GridSpec, values: &[T]) -> Self {
        let n = grid.len();
        let data = values.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
        Field::from_raw(grid, values.len(), data)
    }

    /// Builds a field from `f(channel, node coordinates)`.
    pub fn from_fn(grid: GridSpec, channels: usize, mut f: impl FnMut(usize, &[usize]) -> T) -> Result<Self> {
        let n = grid.len();
        let mut data = Vec::with_capacity(channels * n);
        for c in 0..channels {
            for i in 0..n {
                data.push(f(c, &grid.coords(i)));
            }
        }
        Field::new(grid, channels, data)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, coords: &[usize]) -> T {
        let flat: usize = coords.iter().zip(self.grid.strides()).map(|(i, s)| i * s).sum();
        self.channel(c)[flat]
    }

    pub fn same_shape(&self, other: &Field<T>) -> bool {
        self.channels == other.channels && self.grid.extents == other.grid.extents
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self, c: usize) -> T {
        let ch = self.channel(c);
        ch.iter().copied().sum::<T>() / T::of(ch.len() as f64)
    }

    /// Elementwise `self + alpha * other`.
    pub fn axpy(&self, alpha: T, other: &Field<T>) -> Field<T> {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + alpha * b).collect();
        Field::from_raw(self.grid.clone(), self.channels, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field::from_raw(self.grid.clone(), self.channels, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Keeps only the listed channels, in order.
    pub fn select_channels(&self, which: &[usize]) -> Result<Field<T>> {
        let mut data = Vec::with_capacity(which.len() * self.grid.len());
        for &c in which {
            if c >= self.channels {
                return Err(Error::InvalidArgument(format!("channel {c} out of range")));
            }
            data.extend_from_slice(self.channel(c));
        }
        Ok(Field::from_raw(self.grid.clone(), which.len(), data))
    }

    /// Cyclic shift by `offset[a]` nodes along each axis: `out[i] = self[i - offset]`.
    pub fn roll(&self, offset: &[isize]) -> Field<T> {
        let grid = self.grid.clone();
        let n = grid.len();
        let mut data = vec![T::zero(); self.data.len()];
        for i in 0..n {
            let coords = grid.coords(i);
            let mut dst = 0;
            for (a, (&x, &s)) in coords.iter().zip(&grid.strides()).enumerate() {
                let e = grid.extents[a] as isize;
                dst += ((x as isize + offset[a]).rem_euclid(e)) as usize * s;
            }
            for c in 0..self.channels {
                data[c * n + dst] = self.data[c * n + i];
            }
        }
        Field::from_raw(grid, self.channels, data)
    }

    pub fn cast<U: Real>(&self) -> Field<U> {
        Field::from_raw(self.grid.clone(), self.channels, self.data.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

/// Time-ordered snapshots sharing one grid, spaced `dt` apart from `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    frames: Vec<Field<T>>,
    dt: f64,
    t0: f64,
}

impl<T: Real> Trajectory<T> {
    pub fn new(frames: Vec<Field<T>>, dt: f64, t0: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("trajectory needs at least one frame".into()))?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("trajectory dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("trajectory t0 must be finite".into()));
        }
        if let Some(k) = frames.iter().position(|f| !f.same_shape(first) || f.grid != first.grid) {
            return Err(Error::ShapeMismatch(format!("frame {k} differs in shape from frame 0")));
        }
        Ok(Trajectory { frames, dt, t0 })
    }

    pub fn frames(&self) -> &[Field<T>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Field<T>> {
        self.frames
    }

    pub fn frame(&self, k: usize) -> &Field<T> {
        &self.frames[k]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        self.frames[0].grid()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels()
    }

    /// First `n` frames.
    pub fn truncate(&self, n: usize) -> Result<Trajectory<T>> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {n} frames of a {}-frame trajectory",
                self.len()
            )));
        }
        Ok(Trajectory {
            frames: self.frames[..n].to_vec(),
            dt: self.dt,
            t0: self.t0,
        })
    }

    /// Every `stride`-th frame, starting from frame 0.
    pub fn every(&self, stride: usize) -> Result<Trajectory<T>> {
        if stride == 0 {
            return Err(Error::InvalidArgument("time stride must be at least 1".into()));
        }
        Ok(Trajectory {
            frames: self.frames.iter().step_by(stride).cloned().collect(),
            dt: self.dt * stride as f64,
            t0: self.t0,
        })
    }
}
