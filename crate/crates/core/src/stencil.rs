//! Fourth-order finite-difference stencils on periodic (or padded) grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, PaddingMode};
use crate::kernel::{correlate_acc, row_bases, Kernel};
use crate::scalar::Real;

/// `[-1, 16, -30, 16, -1] / (12 dx^2)`
pub const SECOND_DERIVATIVE_TAPS: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
/// `[1, -8, 0, 8, -1] / (12 dx)`, cross-correlation orientation.
pub const FIRST_DERIVATIVE_TAPS: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];

/// Linear differential operator realised by a fixed stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffOp {
    Identity,
    /// First derivative along the given axis (0 = x, 1 = y, 2 = z).
    Derivative(usize),
    Laplacian,
}

/// A finite-difference stencil on an `ndim`-dimensional grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub op: DiffOp,
    pub ndim: usize,
}

impl Stencil {
    pub fn new(op: DiffOp, ndim: usize) -> Result<Self> {
        if let DiffOp::Derivative(axis) = op {
            if axis >= ndim {
                return Err(Error::InvalidArgument(format!("axis {axis} out of range for a {ndim}D grid")));
            }
        }
        Ok(Stencil { op, ndim })
    }

    pub fn laplacian(ndim: usize) -> Self {
        Stencil { op: DiffOp::Laplacian, ndim }
    }

    /// One-dimensional taps, before normalisation.
    pub fn taps(&self) -> &'static [f64] {
        match self.op {
            DiffOp::Identity => &[1.0],
            DiffOp::Derivative(_) => &FIRST_DERIVATIVE_TAPS,
            DiffOp::Laplacian => &SECOND_DERIVATIVE_TAPS,
        }
    }

    pub fn center(&self) -> usize {
        self.taps().len() / 2
    }

    /// Power of `dx` the taps are divided by.
    pub fn dx_power(&self) -> i32 {
        match self.op {
            DiffOp::Identity => 0,
            DiffOp::Derivative(_) => 1,
            DiffOp::Laplacian => 2,
        }
    }

    fn normalization(&self, dx: f64) -> f64 {
        match self.op {
            DiffOp::Identity => 1.0,
            _ => 12.0 * dx.powi(self.dx_power()),
        }
    }

    /// Dense filter with the 1D taps laid along the relevant axes through
    /// the centre. In 2D the Laplacian is the 9-point cross with -60 at the centre.
    pub fn kernel<T: Real>(&self, dx: f64) -> Kernel<T> {
        let taps = self.taps();
        let size = taps.len();
        let c = self.center();
        let mut raw = vec![0.0; size.pow(self.ndim as u32)];
        let flat = |coords: &[usize]| coords.iter().fold(0, |acc, &x| acc * size + x);
        let axes: Vec<usize> = match self.op {
            DiffOp::Identity => vec![0],
            DiffOp::Derivative(a) => vec![a],
            DiffOp::Laplacian => (0..self.ndim).collect(),
        };
        for &axis in &axes {
            for (t, &w) in taps.iter().enumerate() {
                let mut coords = vec![c; self.ndim];
                coords[axis] = t;
                raw[flat(&coords)] += w;
            }
        }
        let norm = self.normalization(dx);
        Kernel::new(self.ndim, size, raw.into_iter().map(|w| T::of(w / norm)).collect())
    }

    /// Filter width along every axis.
    pub fn size(&self) -> usize {
        self.taps().len()
    }

    /// Dense row-major filter weights of [`Stencil::kernel`].
    pub fn weights<T: Real>(&self, dx: f64) -> Vec<T> {
        self.kernel(dx).weights
    }

    /// Sum of the 1D coefficients; zero for every derivative stencil.
    pub fn coefficient_sum(&self) -> f64 {
        self.taps().iter().sum()
    }
}

/// Applies `op` to every channel, building ghost cells with `mode`.
pub fn apply<T: Real>(op: DiffOp, field: &Field<T>, mode: &PaddingMode) -> Result<Field<T>> {
    let grid = field.grid();
    let stencil = Stencil::new(op, grid.ndim())?;
    mode.check_channels(field.channels())?;
    let kernel: Kernel<T> = stencil.kernel(grid.dx());
    let half = kernel.half();
    let padded_ext: Vec<usize> = grid.extents().iter().map(|n| n + 2 * half).collect();
    let taps = kernel.taps(&padded_ext);
    let rows = row_bases(grid.extents(), &padded_ext);
    let width = *grid.extents().last().unwrap();
    let mut out = Field::zeros(grid.clone(), field.channels());
    for c in 0..field.channels() {
        let padded = crate::field::pad_channel(field.channel(c), grid.extents(), half, mode.rule(c, grid.dx()));
        correlate_acc(&padded, &rows, width, &taps, out.channel_mut(c));
    }
    Ok(out)
}

/// Fourth-order Laplacian: 9-point cross in 2D, the same taps per axis in 3D.
pub fn laplacian<T: Real>(field: &Field<T>, mode: &PaddingMode) -> Result<Field<T>> {
    apply(DiffOp::Laplacian, field, mode)
}

/// Fourth-order first derivative along `axis`.
pub fn ddx<T: Real>(field: &Field<T>, axis: usize, mode: &PaddingMode) -> Result<Field<T>> {
    apply(DiffOp::Derivative(axis), field, mode)
}
