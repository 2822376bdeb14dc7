//! Same-size cross-correlation on padded buffers. Both the finite-difference
//! solver and the autodiff convolution go through these loops, so a frozen
//! stencil filter reproduces the solver's operator bit for bit.

use crate::field::strides;
use crate::scalar::Real;

/// Dense `size^ndim` filter, row-major over the tap offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T> {
    pub ndim: usize,
    pub size: usize,
    pub weights: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(ndim: usize, size: usize, weights: Vec<T>) -> Self {
        debug_assert_eq!(weights.len(), size.pow(ndim as u32));
        Kernel { ndim, size, weights }
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    /// Non-zero taps as flat offsets into a buffer with `padded` extents,
    /// in row-major tap order.
    pub fn taps(&self, padded: &[usize]) -> Vec<(usize, T)> {
        taps_of(&self.weights, self.ndim, self.size, padded)
    }
}

pub(crate) fn taps_of<T: Real>(weights: &[T], ndim: usize, size: usize, padded: &[usize]) -> Vec<(usize, T)> {
    let ps = strides(padded);
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != T::zero())
        .map(|(t, &w)| (tap_offset(t, ndim, size, &ps), w))
        .collect()
}

pub(crate) fn tap_offset(mut t: usize, ndim: usize, size: usize, pstrides: &[usize]) -> usize {
    let mut off = 0;
    for a in (0..ndim).rev() {
        off += (t % size) * pstrides[a];
        t /= size;
    }
    off
}

/// Start offsets (padded, output) of every output row along the last axis.
pub(crate) fn row_bases(out_ext: &[usize], padded: &[usize]) -> Vec<(usize, usize)> {
    let d = out_ext.len();
    let ps = strides(padded);
    let os = strides(out_ext);
    let rows: usize = out_ext[..d - 1].iter().product();
    (0..rows)
        .map(|r| {
            let mut rem = r;
            let (mut p, mut o) = (0, 0);
            for a in (0..d - 1).rev() {
                let x = rem % out_ext[a];
                rem /= out_ext[a];
                p += x * ps[a];
                o += x * os[a];
            }
            (p, o)
        })
        .collect()
}

/// `out[i] += sum_taps w * padded[i + tap]`, taps applied in order.
pub(crate) fn correlate_acc<T: Real>(padded: &[T], rows: &[(usize, usize)], width: usize, taps: &[(usize, T)], out: &mut [T]) {
    for &(delta, w) in taps {
        for &(p, o) in rows {
            let src = &padded[p + delta..p + delta + width];
            for (d, &x) in out[o..o + width].iter_mut().zip(src) {
                *d = *d + w * x;
            }
        }
    }
}

/// Adjoint of [`correlate_acc`] with respect to the padded input.
pub(crate) fn correlate_adjoint_acc<T: Real>(
    grad_out: &[T],
    rows: &[(usize, usize)],
    width: usize,
    taps: &[(usize, T)],
    grad_padded: &mut [T],
) {
    for &(delta, w) in taps {
        for &(p, o) in rows {
            let dst = &mut grad_padded[p + delta..p + delta + width];
            for (d, &g) in dst.iter_mut().zip(&grad_out[o..o + width]) {
                *d = *d + w * g;
            }
        }
    }
}

/// Gradient of `sum(grad_out * correlate(padded, filter))` with respect to
/// each filter tap (all taps, including zero ones).
pub(crate) fn correlate_filter_grad<T: Real>(
    grad_out: &[T],
    padded: &[T],
    rows: &[(usize, usize)],
    width: usize,
    offsets: &[usize],
) -> Vec<T> {
    offsets
        .iter()
        .map(|&delta| {
            let mut acc = T::zero();
            for &(p, o) in rows {
                let src = &padded[p + delta..p + delta + width];
                for (&g, &x) in grad_out[o..o + width].iter().zip(src) {
                    acc = acc + g * x;
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_skip_zeros_in_row_major_order() {
        let k = Kernel::new(2, 3, vec![0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0]);
        let taps = k.taps(&[7, 9]);
        assert_eq!(taps, vec![(1, 1.0), (9, 2.0), (11, 3.0), (19, 4.0)]);
    }

    #[test]
    fn correlation_matches_direct_sum() {
        let padded: Vec<f64> = (0..49).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let k = Kernel::new(2, 3, w.clone());
        let rows = row_bases(&[5, 5], &[7, 7]);
        let mut out = vec![0.0; 25];
        correlate_acc(&padded, &rows, 5, &k.taps(&[7, 7]), &mut out);
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        s += w[a * 3 + b] * padded[(i + a) * 7 + j + b];
                    }
                }
                assert!((out[i * 5 + j] - s).abs() < 1e-12);
            }
        }
    }
}
