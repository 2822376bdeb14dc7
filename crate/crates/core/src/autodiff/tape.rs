use std::sync::atomic::{AtomicU64, Ordering};

use super::ops::{self, same, Shape};
use super::Graph;
use crate::error::{Error, Result};
use crate::field::{GridSpec, PaddingMode};
use crate::scalar::Real;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on one particular [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TapeTensor {
    tape: u64,
    idx: usize,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv { x: usize, w: usize, b: Option<usize>, padding: PaddingMode },
    Hadamard(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, T),
    Axpy(usize, T, usize),
    ChannelScale(usize, usize),
    Bounded { theta: usize, lo: Vec<T>, hi: Vec<T> },
    Upsample(usize),
    Gather(usize),
    Tanh(usize),
    Mse(usize, usize),
    Dot(usize, Vec<T>),
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Shape,
    op: Op<T>,
    requires_grad: bool,
    needs_grad: bool,
}

/// Append-only record of operations, differentiated by [`Tape::backward`].
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    differentiated: bool,
}

/// Gradients of one backward pass, keyed by leaf tensor.
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Vec<T>>>,
}

impl<T> Gradients<T> {
    /// Gradient of a `requires_grad` leaf; `None` for any other tensor.
    pub fn get(&self, t: TapeTensor) -> Option<&[T]> {
        if t.tape != self.tape {
            return None;
        }
        self.grads.get(t.idx).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, t: TapeTensor) -> Option<Vec<T>> {
        if t.tape != self.tape {
            return None;
        }
        self.grads.get_mut(t.idx).and_then(Option::take)
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            differentiated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input.
    pub fn param(&mut self, value: Vec<T>, shape: Shape) -> Result<TapeTensor> {
        self.leaf(value, shape, true)
    }

    /// Input excluded from differentiation.
    pub fn constant(&mut self, value: Vec<T>, shape: Shape) -> Result<TapeTensor> {
        self.leaf(value, shape, false)
    }

    /// Allows another [`Tape::backward`] call on this tape.
    pub fn reset_grads(&mut self) {
        self.differentiated = false;
    }

    fn check(&self, t: &TapeTensor) -> Result<usize> {
        if t.tape != self.id {
            return Err(Error::CrossTape { expected: self.id, found: t.tape });
        }
        Ok(t.idx)
    }

    fn push(&mut self, value: Vec<T>, shape: Shape, op: Op<T>, inputs: &[usize]) -> TapeTensor {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, shape, op, requires_grad: false, needs_grad });
        TapeTensor { tape: self.id, idx: self.nodes.len() - 1 }
    }

    /// Reverse-mode gradients of a scalar `loss` for every `requires_grad`
    /// leaf recorded before it. Leaves the loss does not depend on get zeros.
    pub fn backward(&mut self, loss: TapeTensor) -> Result<Gradients<T>> {
        let root = self.check(&loss)?;
        let n = self.nodes[root].value.len();
        if n != 1 {
            return Err(Error::NonScalarLoss(n));
        }
        if self.differentiated {
            return Err(Error::BackwardTwice);
        }
        self.differentiated = true;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![T::one()]);
        for i in (0..=root).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[i].is_none() {
                grads[i] = Some(vec![T::zero(); node.value.len()]);
            } else if !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let needs = |j: usize| self.nodes[j].needs_grad;
        let val = |j: usize| self.nodes[j].value.as_slice();
        let mut acc = |j: usize, contrib: Vec<T>| match &mut grads[j] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e = *e + c;
                }
            }
            slot @ None => *slot = Some(contrib),
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv { x, w, b, padding } => {
                let need = [needs(*x), needs(*w), b.is_some_and(&needs)];
                let cg = ops::conv_backward(
                    g,
                    val(*x),
                    &self.nodes[*x].shape,
                    val(*w),
                    &self.nodes[*w].shape,
                    padding,
                    need,
                );
                if let Some(gx) = cg.x {
                    acc(*x, gx);
                }
                if let Some(gw) = cg.w {
                    acc(*w, gw);
                }
                if let (Some(b), Some(gb)) = (b, cg.b) {
                    acc(*b, gb);
                }
            }
            Op::Hadamard(a, b) => {
                if needs(*a) {
                    acc(*a, ops::zip_map(g, val(*b), |x, y| x * y));
                }
                if needs(*b) {
                    acc(*b, ops::zip_map(g, val(*a), |x, y| x * y));
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    acc(*a, g.to_vec());
                }
                if needs(*b) {
                    acc(*b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    acc(*a, g.to_vec());
                }
                if needs(*b) {
                    acc(*b, g.iter().map(|&v| -v).collect());
                }
            }
            Op::Scale(a, alpha) => acc(*a, g.iter().map(|&v| *alpha * v).collect()),
            Op::Axpy(a, alpha, b) => {
                if needs(*a) {
                    acc(*a, g.to_vec());
                }
                if needs(*b) {
                    acc(*b, g.iter().map(|&v| *alpha * v).collect());
                }
            }
            Op::ChannelScale(x, c) => {
                let (gx, gc) = ops::channel_scale_backward(g, val(*x), val(*c));
                if needs(*x) {
                    acc(*x, gx);
                }
                if needs(*c) {
                    acc(*c, gc);
                }
            }
            Op::Bounded { theta, lo, hi } => acc(*theta, ops::bounded_backward(g, val(*theta), lo, hi)),
            Op::Upsample(x) => acc(*x, ops::upsample_backward(g, &self.nodes[*x].shape, &self.nodes[i].shape)),
            Op::Gather(x) => acc(*x, ops::gather_backward(g, &self.nodes[*x].shape, &self.nodes[i].shape)),
            Op::Tanh(x) => acc(*x, ops::zip_map(g, val(i), |gv, y| gv * (T::one() - y * y))),
            Op::Mse(a, b) => {
                let ga = ops::mse_backward(g[0], val(*a), val(*b));
                if needs(*b) {
                    acc(*b, ga.iter().map(|&v| -v).collect());
                }
                if needs(*a) {
                    acc(*a, ga);
                }
            }
            Op::Dot(x, w) => acc(*x, w.iter().map(|&v| g[0] * v).collect()),
        }
    }
}

impl<T: Real> Graph<T> for Tape<T> {
    type Tensor = TapeTensor;

    fn leaf(&mut self, value: Vec<T>, shape: Shape, requires_grad: bool) -> Result<TapeTensor> {
        if value.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!("{} values for dims {:?}", value.len(), shape.dims())));
        }
        self.nodes.push(Node { value, shape, op: Op::Leaf, requires_grad, needs_grad: requires_grad });
        Ok(TapeTensor { tape: self.id, idx: self.nodes.len() - 1 })
    }

    fn value<'a>(&'a self, t: &'a TapeTensor) -> &'a [T] {
        assert_eq!(t.tape, self.id, "tensor from another tape");
        &self.nodes[t.idx].value
    }

    fn shape<'a>(&'a self, t: &'a TapeTensor) -> &'a Shape {
        assert_eq!(t.tape, self.id, "tensor from another tape");
        &self.nodes[t.idx].shape
    }

    fn conv(
        &mut self,
        x: &TapeTensor,
        filters: &TapeTensor,
        bias: Option<&TapeTensor>,
        padding: &PaddingMode,
    ) -> Result<TapeTensor> {
        let (xi, wi) = (self.check(x)?, self.check(filters)?);
        let bi = bias.map(|b| self.check(b)).transpose()?;
        let (v, s) = {
            let n = &self.nodes;
            ops::conv_forward(
                &n[xi].value,
                &n[xi].shape,
                &n[wi].value,
                &n[wi].shape,
                bi.map(|b| (n[b].value.as_slice(), &n[b].shape)),
                padding,
            )?
        };
        let mut inputs = vec![xi, wi];
        inputs.extend(bi);
        Ok(self.push(v, s, Op::Conv { x: xi, w: wi, b: bi, padding: padding.clone() }, &inputs))
    }

    fn hadamard(&mut self, a: &TapeTensor, b: &TapeTensor) -> Result<TapeTensor> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        same(&self.nodes[ai].shape, &self.nodes[bi].shape, "hadamard")?;
        let v = ops::zip_map(&self.nodes[ai].value, &self.nodes[bi].value, |x, y| x * y);
        let s = self.nodes[ai].shape.clone();
        Ok(self.push(v, s, Op::Hadamard(ai, bi), &[ai, bi]))
    }

    fn add(&mut self, a: &TapeTensor, b: &TapeTensor) -> Result<TapeTensor> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        same(&self.nodes[ai].shape, &self.nodes[bi].shape, "add")?;
        let v = ops::zip_map(&self.nodes[ai].value, &self.nodes[bi].value, |x, y| x + y);
        let s = self.nodes[ai].shape.clone();
        Ok(self.push(v, s, Op::Add(ai, bi), &[ai, bi]))
    }

    fn sub(&mut self, a: &TapeTensor, b: &TapeTensor) -> Result<TapeTensor> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        same(&self.nodes[ai].shape, &self.nodes[bi].shape, "sub")?;
        let v = ops::zip_map(&self.nodes[ai].value, &self.nodes[bi].value, |x, y| x - y);
        let s = self.nodes[ai].shape.clone();
        Ok(self.push(v, s, Op::Sub(ai, bi), &[ai, bi]))
    }

    fn scale(&mut self, a: &TapeTensor, alpha: T) -> Result<TapeTensor> {
        let ai = self.check(a)?;
        let v = self.nodes[ai].value.iter().map(|&x| alpha * x).collect();
        let s = self.nodes[ai].shape.clone();
        Ok(self.push(v, s, Op::Scale(ai, alpha), &[ai]))
    }

    fn axpy(&mut self, a: &TapeTensor, alpha: T, b: &TapeTensor) -> Result<TapeTensor> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        same(&self.nodes[ai].shape, &self.nodes[bi].shape, "axpy")?;
        let v = ops::zip_map(&self.nodes[ai].value, &self.nodes[bi].value, |x, y| x + alpha * y);
        let s = self.nodes[ai].shape.clone();
        Ok(self.push(v, s, Op::Axpy(ai, alpha, bi), &[ai, bi]))
    }

    fn channel_scale(&mut self, x: &TapeTensor, coeff: &TapeTensor) -> Result<TapeTensor> {
        let (xi, ci) = (self.check(x)?, self.check(coeff)?);
        ops::check_channel_scale(&self.nodes[xi].shape, &self.nodes[ci].shape)?;
        let v = ops::channel_scale_forward(&self.nodes[xi].value, &self.nodes[ci].value);
        let s = self.nodes[xi].shape.clone();
        Ok(self.push(v, s, Op::ChannelScale(xi, ci), &[xi, ci]))
    }

    fn bounded(&mut self, theta: &TapeTensor, lo: &[T], hi: &[T]) -> Result<TapeTensor> {
        let ti = self.check(theta)?;
        ops::check_bounds(&self.nodes[ti].shape, lo, hi)?;
        let v = ops::bounded_forward(&self.nodes[ti].value, lo, hi);
        let s = self.nodes[ti].shape.clone();
        Ok(self.push(v, s, Op::Bounded { theta: ti, lo: lo.to_vec(), hi: hi.to_vec() }, &[ti]))
    }

    fn upsample(&mut self, x: &TapeTensor, target: &GridSpec) -> Result<TapeTensor> {
        let xi = self.check(x)?;
        let (v, s) = ops::upsample_forward(&self.nodes[xi].value, &self.nodes[xi].shape, target)?;
        Ok(self.push(v, s, Op::Upsample(xi), &[xi]))
    }

    fn gather(&mut self, x: &TapeTensor, coarse: &GridSpec) -> Result<TapeTensor> {
        let xi = self.check(x)?;
        let (v, s) = ops::gather_forward(&self.nodes[xi].value, &self.nodes[xi].shape, coarse)?;
        Ok(self.push(v, s, Op::Gather(xi), &[xi]))
    }

    fn tanh(&mut self, x: &TapeTensor) -> Result<TapeTensor> {
        let xi = self.check(x)?;
        let v = self.nodes[xi].value.iter().map(|v| v.tanh()).collect();
        let s = self.nodes[xi].shape.clone();
        Ok(self.push(v, s, Op::Tanh(xi), &[xi]))
    }

    fn mse(&mut self, a: &TapeTensor, b: &TapeTensor) -> Result<TapeTensor> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        same(&self.nodes[ai].shape, &self.nodes[bi].shape, "mse")?;
        let v = ops::mse_forward(&self.nodes[ai].value, &self.nodes[bi].value);
        Ok(self.push(vec![v], Shape::scalar(), Op::Mse(ai, bi), &[ai, bi]))
    }

    fn dot_const(&mut self, x: &TapeTensor, weights: &[T]) -> Result<TapeTensor> {
        let xi = self.check(x)?;
        if weights.len() != self.nodes[xi].value.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} values",
                weights.len(),
                self.nodes[xi].value.len()
            )));
        }
        let v = ops::dot(&self.nodes[xi].value, weights);
        Ok(self.push(vec![v], Shape::scalar(), Op::Dot(xi, weights.to_vec()), &[xi]))
    }
}
