use std::rc::Rc;

use super::ops::{self, same, Shape};
use super::Graph;
use crate::error::{Error, Result};
use crate::field::{GridSpec, PaddingMode};
use crate::scalar::Real;

/// Evaluates operations immediately and keeps nothing for differentiation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

#[derive(Clone, Debug)]
pub struct EagerTensor<T>(Rc<(Vec<T>, Shape)>);

impl<T> EagerTensor<T> {
    fn new(value: Vec<T>, shape: Shape) -> Self {
        EagerTensor(Rc::new((value, shape)))
    }

    fn v(&self) -> &[T] {
        &self.0 .0
    }

    fn s(&self) -> &Shape {
        &self.0 .1
    }
}

impl<T: Real> Graph<T> for Eager {
    type Tensor = EagerTensor<T>;

    fn leaf(&mut self, value: Vec<T>, shape: Shape, _requires_grad: bool) -> Result<Self::Tensor> {
        if value.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!("{} values for dims {:?}", value.len(), shape.dims())));
        }
        Ok(EagerTensor::new(value, shape))
    }

    fn value<'a>(&'a self, t: &'a Self::Tensor) -> &'a [T] {
        t.v()
    }

    fn shape<'a>(&'a self, t: &'a Self::Tensor) -> &'a Shape {
        t.s()
    }

    fn conv(
        &mut self,
        x: &Self::Tensor,
        filters: &Self::Tensor,
        bias: Option<&Self::Tensor>,
        padding: &PaddingMode,
    ) -> Result<Self::Tensor> {
        let (v, s) = ops::conv_forward(x.v(), x.s(), filters.v(), filters.s(), bias.map(|b| (b.v(), b.s())), padding)?;
        Ok(EagerTensor::new(v, s))
    }

    fn hadamard(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor> {
        same(a.s(), b.s(), "hadamard")?;
        Ok(EagerTensor::new(ops::zip_map(a.v(), b.v(), |x, y| x * y), a.s().clone()))
    }

    fn add(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor> {
        same(a.s(), b.s(), "add")?;
        Ok(EagerTensor::new(ops::zip_map(a.v(), b.v(), |x, y| x + y), a.s().clone()))
    }

    fn sub(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor> {
        same(a.s(), b.s(), "sub")?;
        Ok(EagerTensor::new(ops::zip_map(a.v(), b.v(), |x, y| x - y), a.s().clone()))
    }

    fn scale(&mut self, a: &Self::Tensor, alpha: T) -> Result<Self::Tensor> {
        Ok(EagerTensor::new(a.v().iter().map(|&x| alpha * x).collect(), a.s().clone()))
    }

    fn axpy(&mut self, a: &Self::Tensor, alpha: T, b: &Self::Tensor) -> Result<Self::Tensor> {
        same(a.s(), b.s(), "axpy")?;
        Ok(EagerTensor::new(ops::zip_map(a.v(), b.v(), |x, y| x + alpha * y), a.s().clone()))
    }

    fn channel_scale(&mut self, x: &Self::Tensor, coeff: &Self::Tensor) -> Result<Self::Tensor> {
        ops::check_channel_scale(x.s(), coeff.s())?;
        Ok(EagerTensor::new(ops::channel_scale_forward(x.v(), coeff.v()), x.s().clone()))
    }

    fn bounded(&mut self, theta: &Self::Tensor, lo: &[T], hi: &[T]) -> Result<Self::Tensor> {
        ops::check_bounds(theta.s(), lo, hi)?;
        Ok(EagerTensor::new(ops::bounded_forward(theta.v(), lo, hi), theta.s().clone()))
    }

    fn upsample(&mut self, x: &Self::Tensor, target: &GridSpec) -> Result<Self::Tensor> {
        let (v, s) = ops::upsample_forward(x.v(), x.s(), target)?;
        Ok(EagerTensor::new(v, s))
    }

    fn gather(&mut self, x: &Self::Tensor, coarse: &GridSpec) -> Result<Self::Tensor> {
        let (v, s) = ops::gather_forward(x.v(), x.s(), coarse)?;
        Ok(EagerTensor::new(v, s))
    }

    fn tanh(&mut self, x: &Self::Tensor) -> Result<Self::Tensor> {
        Ok(EagerTensor::new(x.v().iter().map(|v| v.tanh()).collect(), x.s().clone()))
    }

    fn mse(&mut self, a: &Self::Tensor, b: &Self::Tensor) -> Result<Self::Tensor> {
        same(a.s(), b.s(), "mse")?;
        Ok(EagerTensor::new(vec![ops::mse_forward(a.v(), b.v())], Shape::scalar()))
    }

    fn dot_const(&mut self, x: &Self::Tensor, weights: &[T]) -> Result<Self::Tensor> {
        if weights.len() != x.v().len() {
            return Err(Error::ShapeMismatch(format!("{} weights for {} values", weights.len(), x.v().len())));
        }
        Ok(EagerTensor::new(vec![ops::dot(x.v(), weights)], Shape::scalar()))
    }
}
