//! Reverse-mode differentiation over dense grid tensors, restricted to the
//! operators the network needs.
//!
//! Model code is written once against [`Graph`]: a [`Tape`] records every
//! operation for [`Tape::backward`], while [`Eager`] evaluates the same
//! arithmetic without recording, so inference reproduces training values
//! bit for bit.

mod check;
mod eager;
mod ops;
mod tape;

pub use check::{gradient_check, GradCheck};
pub use eager::{Eager, EagerTensor};
pub use ops::{sigmoid, Shape};
pub use tape::{Gradients, Tape, TapeTensor};

use crate::error::Result;
use crate::field::{Field, GridSpec, PaddingMode};
use crate::scalar::Real;

/// Operator set shared by the recording tape and the eager evaluator.
pub trait Graph<T: Real> {
    type Tensor: Clone;

    /// New input tensor; only tapes track `requires_grad`.
    fn leaf(&mut self, value: Vec<T>, shape: Shape, requires_grad: bool) -> Result<Self::Tensor>;
    fn value<'a>(&'a self, t: &'a Self::Tensor) -> &'a [T];
    fn shape<'a>(&'a self, t: &'a Self::Tensor) -> &'a Shape;

    /// Same-size cross-correlation with ghost cells from `padding`.
    /// `filters` is `[c_out, c_in, k, ..., k]`, `bias` is `[c_out]`.
    fn conv(
        &mut self,
        x: &Self::Tensor,
        filters: &Self::Tensor,
        bias: Option<&Self::Tensor>,
        padding: &PaddingMode,
    ) -> Result<Self::Tensor>;
    fn hadamard(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor>;
    fn add(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor>;
    fn sub(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor>;
    fn scale(&mut self, a: &Self::Tensor, alpha: T) -> Result<Self::Tensor>;
    /// `a + alpha * b`.
    fn axpy(&mut self, a: &Self::Tensor, alpha: T, b: &Self::Tensor) -> Result<Self::Tensor>;
    /// Multiplies channel `c` of a grid tensor by `coeff[c]`.
    fn channel_scale(&mut self, x: &Self::Tensor, coeff: &Self::Tensor) -> Result<Self::Tensor>;
    /// `lo + (hi - lo) * sigmoid(theta)`, elementwise.
    fn bounded(&mut self, theta: &Self::Tensor, lo: &[T], hi: &[T]) -> Result<Self::Tensor>;
    /// Bilinear / trilinear interpolation onto a finer grid.
    fn upsample(&mut self, x: &Self::Tensor, target: &GridSpec) -> Result<Self::Tensor>;
    /// Values at the nodes of a strided coarse grid.
    fn gather(&mut self, x: &Self::Tensor, coarse: &GridSpec) -> Result<Self::Tensor>;
    fn tanh(&mut self, x: &Self::Tensor) -> Result<Self::Tensor>;
    /// Mean of squared differences, as a scalar.
    fn mse(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor>;
    /// `sum(x * weights)` against a constant, as a scalar.
    fn dot_const(&mut self, x: &Self::Tensor, weights: &[T]) -> Result<Self::Tensor>;

    fn field(&mut self, f: &Field<T>, requires_grad: bool) -> Result<Self::Tensor> {
        self.leaf(f.data().to_vec(), Shape::field(f.channels(), f.grid()), requires_grad)
    }

    fn to_field(&self, t: &Self::Tensor) -> Result<Field<T>> {
        let (grid, c) = self.shape(t).spatial("to_field")?;
        Ok(Field::from_raw(grid.clone(), c, self.value(t).to_vec()))
    }

    fn scalar(&self, t: &Self::Tensor) -> T {
        self.value(t)[0]
    }
}
