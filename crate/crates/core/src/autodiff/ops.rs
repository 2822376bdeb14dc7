//! Forward kernels and adjoints shared by the recording tape and the eager
//! evaluator. Every function works on flat row-major buffers plus a [`Shape`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    node_stride, pad_channel, pad_channel_adjoint, resample_all, resample_all_adjoint, strides, AxisMap, AxisRule,
    GridSpec, PaddingMode,
};
use crate::kernel::{correlate_acc, correlate_adjoint_acc, correlate_filter_grad, row_bases, taps_of, tap_offset};
use crate::scalar::Real;

/// Dimensions of a tensor. Grid tensors are laid out `[channels, x, y(, z)]`
/// and remember their grid; parameter arrays carry no grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    dims: Vec<usize>,
    grid: Option<GridSpec>,
}

impl Shape {
    pub fn field(channels: usize, grid: &GridSpec) -> Self {
        let mut dims = vec![channels];
        dims.extend_from_slice(grid.extents());
        Shape { dims, grid: Some(grid.clone()) }
    }

    pub fn array(dims: Vec<usize>) -> Self {
        Shape { dims, grid: None }
    }

    pub fn scalar() -> Self {
        Shape::array(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leading dimension; 1 for scalars.
    pub fn channels(&self) -> usize {
        self.dims.first().copied().unwrap_or(1)
    }

    pub(crate) fn spatial(&self, what: &str) -> Result<(&GridSpec, usize)> {
        match &self.grid {
            Some(g) => Ok((g, self.dims[0])),
            None => Err(Error::ShapeMismatch(format!("{what} needs a grid tensor, got dims {:?}", self.dims))),
        }
    }
}

pub(crate) fn same(a: &Shape, b: &Shape, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{what}: {:?} vs {:?}", a.dims, b.dims)));
    }
    Ok(())
}

struct ConvGeom {
    extents: Vec<usize>,
    padded: Vec<usize>,
    rows: Vec<(usize, usize)>,
    width: usize,
    half: usize,
    ndim: usize,
    k: usize,
    kk: usize,
    n: usize,
    c_in: usize,
    c_out: usize,
    dx: f64,
}

impl ConvGeom {
    fn new(xs: &Shape, ws: &Shape, bs: Option<&Shape>, padding: &PaddingMode) -> Result<Self> {
        let (grid, c_in) = xs.spatial("conv input")?;
        let ndim = grid.ndim();
        let wd = ws.dims();
        if wd.len() != ndim + 2 || wd[1] != c_in {
            return Err(Error::ShapeMismatch(format!(
                "filters {:?} do not fit a {ndim}D input with {c_in} channels",
                wd
            )));
        }
        let k = wd[2];
        if !matches!(k, 1 | 3 | 5) || wd[2..].iter().any(|&d| d != k) {
            return Err(Error::ShapeMismatch(format!("filter size must be 1, 3 or 5 on every axis, got {:?}", &wd[2..])));
        }
        if grid.min_extent() < k {
            return Err(Error::ShapeMismatch(format!("grid {:?} smaller than filter {k}", grid.extents())));
        }
        let c_out = wd[0];
        if let Some(bs) = bs {
            if bs.dims() != [c_out] {
                return Err(Error::ShapeMismatch(format!("bias {:?} for {c_out} output channels", bs.dims())));
            }
        }
        let half = k / 2;
        if half > 0 {
            padding.check_channels(c_in)?;
        }
        let extents = grid.extents().to_vec();
        let padded: Vec<usize> = extents.iter().map(|n| n + 2 * half).collect();
        Ok(ConvGeom {
            rows: row_bases(&extents, &padded),
            width: *extents.last().unwrap(),
            n: grid.len(),
            kk: k.pow(ndim as u32),
            dx: grid.dx(),
            extents,
            padded,
            half,
            ndim,
            k,
            c_in,
            c_out,
        })
    }

    fn rule<T: Real>(&self, padding: &PaddingMode, ci: usize) -> AxisRule<T> {
        if self.half == 0 {
            AxisRule::Periodic
        } else {
            padding.rule(ci, self.dx)
        }
    }

    fn pad_inputs<T: Real>(&self, x: &[T], padding: &PaddingMode) -> Vec<Vec<T>> {
        (0..self.c_in)
            .map(|ci| pad_channel(&x[ci * self.n..(ci + 1) * self.n], &self.extents, self.half, self.rule(padding, ci)))
            .collect()
    }

    fn filter<'a, T>(&self, w: &'a [T], co: usize, ci: usize) -> &'a [T] {
        let start = (co * self.c_in + ci) * self.kk;
        &w[start..start + self.kk]
    }
}

/// Same-size cross-correlation: `out[co] = sum_ci w[co,ci] ⋆ pad(x[ci]) + b[co]`.
pub(crate) fn conv_forward<T: Real>(
    x: &[T],
    xs: &Shape,
    w: &[T],
    ws: &Shape,
    bias: Option<(&[T], &Shape)>,
    padding: &PaddingMode,
) -> Result<(Vec<T>, Shape)> {
    let g = ConvGeom::new(xs, ws, bias.map(|b| b.1), padding)?;
    let padded = g.pad_inputs(x, padding);
    let outs: Vec<Vec<T>> = (0..g.c_out)
        .into_par_iter()
        .map(|co| {
            let mut out = vec![T::zero(); g.n];
            for (ci, p) in padded.iter().enumerate() {
                let taps = taps_of(g.filter(w, co, ci), g.ndim, g.k, &g.padded);
                correlate_acc(p, &g.rows, g.width, &taps, &mut out);
            }
            if let Some((b, _)) = bias {
                for v in &mut out {
                    *v = *v + b[co];
                }
            }
            out
        })
        .collect();
    let grid = xs.grid().unwrap();
    Ok((outs.concat(), Shape::field(g.c_out, grid)))
}

pub(crate) struct ConvGrads<T> {
    pub x: Option<Vec<T>>,
    pub w: Option<Vec<T>>,
    pub b: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    grad: &[T],
    x: &[T],
    xs: &Shape,
    w: &[T],
    ws: &Shape,
    padding: &PaddingMode,
    need: [bool; 3],
) -> ConvGrads<T> {
    let g = ConvGeom::new(xs, ws, None, padding).expect("shape checked in forward");
    let gout = |co: usize| &grad[co * g.n..(co + 1) * g.n];
    let np: usize = g.padded.iter().product();
    let gx = need[0].then(|| {
        let parts: Vec<Vec<T>> = (0..g.c_in)
            .into_par_iter()
            .map(|ci| {
                let mut gp = vec![T::zero(); np];
                for co in 0..g.c_out {
                    let taps = taps_of(g.filter(w, co, ci), g.ndim, g.k, &g.padded);
                    correlate_adjoint_acc(gout(co), &g.rows, g.width, &taps, &mut gp);
                }
                pad_channel_adjoint(&gp, &g.extents, g.half, g.rule(padding, ci))
            })
            .collect();
        parts.concat()
    });
    let gw = need[1].then(|| {
        let padded = g.pad_inputs(x, padding);
        let ps = strides(&g.padded);
        let offsets: Vec<usize> = (0..g.kk).map(|t| tap_offset(t, g.ndim, g.k, &ps)).collect();
        let parts: Vec<Vec<T>> = (0..g.c_out * g.c_in)
            .into_par_iter()
            .map(|pair| {
                let (co, ci) = (pair / g.c_in, pair % g.c_in);
                correlate_filter_grad(gout(co), &padded[ci], &g.rows, g.width, &offsets)
            })
            .collect();
        parts.concat()
    });
    let gb = need[2].then(|| (0..g.c_out).map(|co| gout(co).iter().fold(T::zero(), |s, &v| s + v)).collect());
    ConvGrads { x: gx, w: gw, b: gb }
}

pub(crate) fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn check_channel_scale(xs: &Shape, cs: &Shape) -> Result<()> {
    let (_, c) = xs.spatial("channel scale")?;
    if cs.len() != c {
        return Err(Error::ShapeMismatch(format!("{} coefficients for {c} channels", cs.len())));
    }
    Ok(())
}

pub(crate) fn channel_scale_forward<T: Real>(x: &[T], coeff: &[T]) -> Vec<T> {
    let n = x.len() / coeff.len();
    x.iter().enumerate().map(|(i, &v)| coeff[i / n] * v).collect()
}

pub(crate) fn channel_scale_backward<T: Real>(grad: &[T], x: &[T], coeff: &[T]) -> (Vec<T>, Vec<T>) {
    let n = x.len() / coeff.len();
    let gx = channel_scale_forward(grad, coeff);
    let gc = (0..coeff.len())
        .map(|c| {
            grad[c * n..(c + 1) * n]
                .iter()
                .zip(&x[c * n..(c + 1) * n])
                .fold(T::zero(), |s, (&g, &v)| s + g * v)
        })
        .collect();
    (gx, gc)
}

pub(crate) fn check_bounds<T: Real>(theta: &Shape, lo: &[T], hi: &[T]) -> Result<()> {
    if lo.len() != theta.len() || hi.len() != theta.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters with {} lower and {} upper bounds",
            theta.len(),
            lo.len(),
            hi.len()
        )));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
        return Err(Error::InvalidArgument("bounded parameter needs lo < hi".into()));
    }
    Ok(())
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn bounded_forward<T: Real>(theta: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    (0..theta.len()).map(|i| lo[i] + (hi[i] - lo[i]) * sigmoid(theta[i])).collect()
}

pub(crate) fn bounded_backward<T: Real>(grad: &[T], theta: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    (0..theta.len())
        .map(|i| {
            let s = sigmoid(theta[i]);
            grad[i] * (hi[i] - lo[i]) * s * (T::one() - s)
        })
        .collect()
}

fn axis_maps<T: Real>(src: &GridSpec, dst: &GridSpec) -> Result<Vec<AxisMap<T>>> {
    if src.ndim() != dst.ndim() {
        return Err(Error::ShapeMismatch(format!("{}D input for a {}D target", src.ndim(), dst.ndim())));
    }
    (0..src.ndim())
        .map(|a| AxisMap::between(src.extents()[a], src.dx(), dst.extents()[a], dst.dx()))
        .collect()
}

/// Fixed-weight bilinear / trilinear interpolation onto `target`.
pub(crate) fn upsample_forward<T: Real>(x: &[T], xs: &Shape, target: &GridSpec) -> Result<(Vec<T>, Shape)> {
    let (grid, c) = xs.spatial("upsample")?;
    let maps = axis_maps(grid, target)?;
    let n = grid.len();
    let mut out = Vec::with_capacity(c * target.len());
    for ch in 0..c {
        out.extend(resample_all(&x[ch * n..(ch + 1) * n], grid.extents(), &maps));
    }
    Ok((out, Shape::field(c, target)))
}

pub(crate) fn upsample_backward<T: Real>(grad: &[T], xs: &Shape, out: &Shape) -> Vec<T> {
    let (grid, c) = xs.spatial("upsample").unwrap();
    let target = out.grid().unwrap();
    let maps: Vec<AxisMap<T>> = axis_maps(grid, target).unwrap();
    let m = target.len();
    let mut gx = Vec::with_capacity(c * grid.len());
    for ch in 0..c {
        gx.extend(resample_all_adjoint(&grad[ch * m..(ch + 1) * m], grid.extents(), &maps));
    }
    gx
}

/// Flat fine-grid offsets of every coarse node, per channel.
pub(crate) fn gather_indices(fine: &GridSpec, coarse: &GridSpec) -> Result<Vec<usize>> {
    let s = node_stride(coarse, fine)?;
    let fs = fine.strides();
    Ok((0..coarse.len())
        .map(|j| coarse.coords(j).iter().zip(&fs).map(|(&c, &st)| c * s * st).sum())
        .collect())
}

pub(crate) fn gather_forward<T: Real>(x: &[T], xs: &Shape, coarse: &GridSpec) -> Result<(Vec<T>, Shape)> {
    let (fine, c) = xs.spatial("gather")?;
    let idx = gather_indices(fine, coarse)?;
    let n = fine.len();
    let out = (0..c).flat_map(|ch| idx.iter().map(move |&i| x[ch * n + i])).collect();
    Ok((out, Shape::field(c, coarse)))
}

pub(crate) fn gather_backward<T: Real>(grad: &[T], xs: &Shape, out: &Shape) -> Vec<T> {
    let (fine, c) = xs.spatial("gather").unwrap();
    let idx = gather_indices(fine, out.grid().unwrap()).unwrap();
    let n = fine.len();
    let m = idx.len();
    let mut gx = vec![T::zero(); c * n];
    for ch in 0..c {
        for (j, &i) in idx.iter().enumerate() {
            gx[ch * n + i] = gx[ch * n + i] + grad[ch * m + j];
        }
    }
    gx
}

pub(crate) fn mse_forward<T: Real>(a: &[T], b: &[T]) -> T {
    let s = a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y));
    s / T::of(a.len() as f64)
}

pub(crate) fn mse_backward<T: Real>(g: T, a: &[T], b: &[T]) -> Vec<T> {
    let k = g * T::of(2.0) / T::of(a.len() as f64);
    zip_map(a, b, |x, y| k * (x - y))
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}
