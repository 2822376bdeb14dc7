use serde::{Deserialize, Serialize};

use super::{Field, GridSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Boundary treatment used to build ghost cells around a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Ghost cells copy the opposite edge (torus topology).
    Periodic,
    /// Ghost cells hold the prescribed boundary value, one per channel.
    Dirichlet(Vec<f64>),
    /// Ghost cells realise the prescribed outward normal gradient, one per channel.
    Neumann(Vec<f64>),
}

impl PaddingMode {
    pub fn is_periodic(&self) -> bool {
        matches!(self, PaddingMode::Periodic)
    }

    pub(crate) fn check_channels(&self, channels: usize) -> Result<()> {
        match self {
            PaddingMode::Periodic => Ok(()),
            PaddingMode::Dirichlet(v) | PaddingMode::Neumann(v) if v.len() == channels => Ok(()),
            PaddingMode::Dirichlet(v) | PaddingMode::Neumann(v) => Err(Error::InvalidArgument(format!(
                "boundary condition carries {} values for {} channels",
                v.len(),
                channels
            ))),
        }
    }

    pub(crate) fn rule<T: Real>(&self, channel: usize, dx: f64) -> AxisRule<T> {
        match self {
            PaddingMode::Periodic => AxisRule::Periodic,
            PaddingMode::Dirichlet(v) => AxisRule::Constant(T::of(v[channel])),
            PaddingMode::Neumann(v) => AxisRule::Mirror { step: T::of(2.0 * dx * v[channel]) },
        }
    }
}

/// Ghost construction along one axis.
#[derive(Clone, Copy, Debug)]
pub(crate) enum AxisRule<T> {
    Periodic,
    Constant(T),
    /// `ghost(o) = u[mirror(o)] + o * step` with `step = 2 dx g`.
    Mirror { step: T },
}

/// Pads one axis of a row-major buffer with `width` ghost layers on each side.
pub(crate) fn pad_axis<T: Real>(src: &[T], shape: &[usize], axis: usize, width: usize, rule: AxisRule<T>) -> Vec<T> {
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let np = n + 2 * width;
    let mut out = vec![T::zero(); outer * np * inner];
    for o in 0..outer {
        let s_base = o * n * inner;
        let d_base = o * np * inner;
        out[d_base + width * inner..d_base + (width + n) * inner].copy_from_slice(&src[s_base..s_base + n * inner]);
        for g in 1..=width {
            let lo = d_base + (width - g) * inner;
            let hi = d_base + (width + n - 1 + g) * inner;
            match rule {
                AxisRule::Periodic => {
                    let from_lo = s_base + (n - g) * inner;
                    let from_hi = s_base + (g - 1) * inner;
                    out[lo..lo + inner].copy_from_slice(&src[from_lo..from_lo + inner]);
                    out[hi..hi + inner].copy_from_slice(&src[from_hi..from_hi + inner]);
                }
                AxisRule::Constant(v) => {
                    out[lo..lo + inner].fill(v);
                    out[hi..hi + inner].fill(v);
                }
                AxisRule::Mirror { step } => {
                    let shift = step * T::of(g as f64);
                    let from_lo = s_base + g * inner;
                    let from_hi = s_base + (n - 1 - g) * inner;
                    for i in 0..inner {
                        out[lo + i] = src[from_lo + i] + shift;
                        out[hi + i] = src[from_hi + i] + shift;
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`pad_axis`] with respect to the source values: ghost
/// gradients flow back to the nodes they were copied from.
pub(crate) fn pad_axis_adjoint<T: Real>(
    grad: &[T],
    shape: &[usize],
    axis: usize,
    width: usize,
    rule: AxisRule<T>,
) -> Vec<T> {
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let np = n + 2 * width;
    let mut out = vec![T::zero(); outer * n * inner];
    for o in 0..outer {
        let s_base = o * n * inner;
        let d_base = o * np * inner;
        out[s_base..s_base + n * inner].copy_from_slice(&grad[d_base + width * inner..d_base + (width + n) * inner]);
        for g in 1..=width {
            let lo = d_base + (width - g) * inner;
            let hi = d_base + (width + n - 1 + g) * inner;
            let (to_lo, to_hi) = match rule {
                AxisRule::Periodic => (s_base + (n - g) * inner, s_base + (g - 1) * inner),
                AxisRule::Mirror { .. } => (s_base + g * inner, s_base + (n - 1 - g) * inner),
                AxisRule::Constant(_) => continue,
            };
            for i in 0..inner {
                out[to_lo + i] = out[to_lo + i] + grad[lo + i];
                out[to_hi + i] = out[to_hi + i] + grad[hi + i];
            }
        }
    }
    out
}

/// Pads every spatial axis of one channel buffer, axis 0 first.
pub(crate) fn pad_channel<T: Real>(src: &[T], extents: &[usize], width: usize, rule: AxisRule<T>) -> Vec<T> {
    let mut shape = extents.to_vec();
    let mut buf = src.to_vec();
    for axis in 0..shape.len() {
        buf = pad_axis(&buf, &shape, axis, width, rule);
        shape[axis] += 2 * width;
    }
    buf
}

/// Adjoint of [`pad_channel`]; axes are unwound in reverse order.
pub(crate) fn pad_channel_adjoint<T: Real>(grad: &[T], extents: &[usize], width: usize, rule: AxisRule<T>) -> Vec<T> {
    let mut shape: Vec<usize> = extents.iter().map(|n| n + 2 * width).collect();
    let mut buf = grad.to_vec();
    for axis in (0..shape.len()).rev() {
        shape[axis] -= 2 * width;
        buf = pad_axis_adjoint(&buf, &shape, axis, width, rule);
    }
    buf
}

fn check_width(grid: &GridSpec, width: usize) -> Result<()> {
    if width == 0 || width >= grid.min_extent() {
        return Err(Error::InvalidArgument(format!(
            "pad width {width} must be in 1..{} for extents {:?}",
            grid.min_extent(),
            grid.extents()
        )));
    }
    Ok(())
}

/// Extends every axis by `width` ghost nodes on both sides.
pub fn pad<T: Real>(field: &Field<T>, width: usize, mode: &PaddingMode) -> Result<Field<T>> {
    check_width(field.grid(), width)?;
    mode.check_channels(field.channels())?;
    let grid = field.grid().grown(width);
    let mut data = Vec::with_capacity(field.channels() * grid.len());
    for c in 0..field.channels() {
        let rule = mode.rule(c, field.grid().dx());
        data.extend(pad_channel(field.channel(c), field.grid().extents(), width, rule));
    }
    Ok(Field::from_raw(grid, field.channels(), data))
}

/// Removes `width` nodes from both ends of every axis.
pub fn crop<T: Real>(field: &Field<T>, width: usize) -> Result<Field<T>> {
    let grid = field.grid().shrunk(width)?;
    let grid = GridSpec::new(grid.extents().to_vec(), grid.dx())?;
    let src_strides = field.grid().strides();
    let mut data = Vec::with_capacity(field.channels() * grid.len());
    for c in 0..field.channels() {
        let ch = field.channel(c);
        for i in 0..grid.len() {
            let coords = grid.coords(i);
            let flat: usize = coords.iter().zip(&src_strides).map(|(x, s)| (x + width) * s).sum();
            data.push(ch[flat]);
        }
    }
    Ok(Field::from_raw(grid, field.channels(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn periodic_row_wraps_like_a_torus() {
        let out = pad_axis(&[1.0, 2.0, 3.0], &[3], 0, 1, AxisRule::Periodic);
        assert_eq!(out, vec![3.0, 1.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn dirichlet_ghosts_are_the_boundary_value() {
        let grid = GridSpec::cube(2, 6, 0.1).unwrap();
        let f = Field::from_fn(grid, 2, |c, x| (c + x[0] * 7 + x[1]) as f64 + 0.5).unwrap();
        let p = pad(&f, 1, &PaddingMode::Dirichlet(vec![0.0, 0.0])).unwrap();
        let n = 8;
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                        assert_eq!(p.at(c, &[i, j]).to_bits(), 0.0f64.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn neumann_zero_gradient_on_constant_field() {
        let grid = GridSpec::cube(2, 5, 0.25).unwrap();
        let f = Field::constant(grid, &[3.5]);
        let p = pad(&f, 2, &PaddingMode::Neumann(vec![0.0])).unwrap();
        assert!(p.data().iter().all(|&v| v == 3.5 + 2.0 * 0.25 * 0.0));
        // central difference across the low boundary node
        let grad = (p.at(0, &[3, 4]) - p.at(0, &[1, 4])) / (2.0 * 0.25);
        assert_eq!(grad, 0.0);
    }

    #[test]
    fn neumann_ghost_realises_gradient() {
        let dx = 0.1;
        let grid = GridSpec::cube(2, 6, dx).unwrap();
        let f = Field::from_fn(grid, 1, |_, x| x[0] as f64 * x[0] as f64 * dx * dx).unwrap();
        let g = 0.7;
        let p = pad(&f, 2, &PaddingMode::Neumann(vec![g])).unwrap();
        for o in 1..=2usize {
            // outward gradient at node 0 from the symmetric difference
            let ghost = p.at(0, &[2 - o, 3]);
            let mirror = p.at(0, &[2 + o, 3]);
            let outward = (ghost - mirror) / (2.0 * o as f64 * dx);
            assert!((outward - g).abs() < 1e-12);
        }
    }

    #[test]
    fn width_must_fit() {
        let grid = GridSpec::cube(2, 5, 1.0).unwrap();
        let f = Field::<f64>::zeros(grid, 1);
        assert!(matches!(pad(&f, 5, &PaddingMode::Periodic), Err(Error::InvalidArgument(_))));
        assert!(pad(&f, 0, &PaddingMode::Periodic).is_err());
        assert!(pad(&f, 1, &PaddingMode::Dirichlet(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn pad_adjoint_inner_product() {
        let shape = [6usize, 7];
        let x: Vec<f64> = (0..42).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let y: Vec<f64> = (0..(10 * 11)).map(|i| ((i * 13 % 7) as f64 - 3.0) / 2.0).collect();
        for rule in [AxisRule::Periodic, AxisRule::Mirror { step: 0.0 }, AxisRule::Constant(0.0)] {
            let px = pad_channel(&x, &shape, 2, rule);
            let aty = pad_channel_adjoint(&y, &shape, 2, rule);
            let lhs: f64 = px.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    fn arb_field() -> impl Strategy<Value = Field<f64>> {
        (5usize..9, 5usize..9, 1usize..3).prop_flat_map(|(h, w, c)| {
            prop::collection::vec(-10.0f64..10.0, h * w * c)
                .prop_map(move |data| Field::new(GridSpec::new(vec![h, w], 0.1).unwrap(), c, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn periodic_pad_then_crop_is_identity(f in arb_field(), w in 1usize..5) {
            let p = pad(&f, w, &PaddingMode::Periodic).unwrap();
            prop_assert_eq!(crop(&p, w).unwrap(), f);
        }

        #[test]
        fn periodic_pad_commutes_with_shift(f in arb_field(), sx in -4isize..4, sy in -4isize..4, w in 1usize..5) {
            let shifted = pad(&f.roll(&[sx, sy]), w, &PaddingMode::Periodic).unwrap();
            let padded = pad(&f, w, &PaddingMode::Periodic).unwrap();
            // compare interiors of the extended grids under the same shift
            let ext = padded.grid().extents().to_vec();
            for c in 0..f.channels() {
                for i in 0..ext[0] {
                    for j in 0..ext[1] {
                        let h = f.grid().extents()[0] as isize;
                        let wd = f.grid().extents()[1] as isize;
                        let si = ((i as isize - w as isize - sx).rem_euclid(h)) as usize + w;
                        let sj = ((j as isize - w as isize - sy).rem_euclid(wd)) as usize + w;
                        prop_assert_eq!(shifted.at(c, &[i, j]), padded.at(c, &[si, sj]));
                    }
                }
            }
        }
    }
}
