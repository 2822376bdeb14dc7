use super::{Field, GridSpec, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear interpolation weights along one periodic axis: each target node
/// reads `w_lo * src[lo] + w_hi * src[hi]`. `w_hi == 0` marks a coincident node.
#[derive(Clone, Debug)]
pub(crate) struct AxisMap<T> {
    pub n_src: usize,
    pub entries: Vec<(usize, usize, T, T)>,
}

impl<T: Real> AxisMap<T> {
    /// Source node `j` sits at `j * dx_src`; the period is the target's
    /// `n_dst * dx_dst`, so the wrap interval of a strided subset may be shorter.
    pub fn between(n_src: usize, dx_src: f64, n_dst: usize, dx_dst: f64) -> Result<Self> {
        let period = n_dst as f64 * dx_dst;
        let last = (n_src - 1) as f64 * dx_src;
        let tol = 1e-9 * period;
        if !(last < period - tol && period <= n_src as f64 * dx_src + tol) {
            return Err(Error::InvalidArgument(format!(
                "source axis ({n_src} nodes, dx {dx_src}) does not span the target period {period}"
            )));
        }
        let ratio = dx_src / dx_dst;
        let stride = ratio.round();
        let mut entries = Vec::with_capacity(n_dst);
        if stride >= 1.0 && (ratio - stride).abs() <= 1e-9 * ratio {
            // exact integer arithmetic for strided subsets
            let s = stride as usize;
            let tail = n_dst - (n_src - 1) * s;
            for i in 0..n_dst {
                let (j, q, len) = if i / s < n_src - 1 {
                    (i / s, i % s, s)
                } else {
                    (n_src - 1, i - (n_src - 1) * s, tail)
                };
                let hi = if j + 1 == n_src { 0 } else { j + 1 };
                entries.push(weights(j, hi, q as f64 / len as f64));
            }
        } else {
            for i in 0..n_dst {
                let x = i as f64 * dx_dst;
                let (j, hi, w) = if x >= last {
                    (n_src - 1, 0, (x - last) / (period - last))
                } else {
                    let j = ((x / dx_src).floor() as usize).min(n_src - 2);
                    (j, j + 1, (x / dx_src - j as f64).clamp(0.0, 1.0))
                };
                entries.push(weights(j, hi, w));
            }
        }
        Ok(AxisMap { n_src, entries })
    }
}

fn weights<T: Real>(lo: usize, hi: usize, w: f64) -> (usize, usize, T, T) {
    (lo, hi, T::one() - T::of(w), T::of(w))
}

pub(crate) fn resample_axis<T: Real>(src: &[T], shape: &[usize], axis: usize, map: &AxisMap<T>) -> Vec<T> {
    let n = shape[axis];
    debug_assert_eq!(n, map.n_src);
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let m = map.entries.len();
    let mut out = vec![T::zero(); outer * m * inner];
    for o in 0..outer {
        let s_base = o * n * inner;
        let d_base = o * m * inner;
        for (i, &(lo, hi, wl, wh)) in map.entries.iter().enumerate() {
            let dst = &mut out[d_base + i * inner..d_base + (i + 1) * inner];
            let a = &src[s_base + lo * inner..s_base + (lo + 1) * inner];
            if wh == T::zero() {
                dst.copy_from_slice(a);
            } else {
                let b = &src[s_base + hi * inner..s_base + (hi + 1) * inner];
                for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
                    *d = wl * x + wh * y;
                }
            }
        }
    }
    out
}

pub(crate) fn resample_axis_adjoint<T: Real>(grad: &[T], shape: &[usize], axis: usize, map: &AxisMap<T>) -> Vec<T> {
    // `shape` is the source shape
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let m = map.entries.len();
    let mut out = vec![T::zero(); outer * n * inner];
    for o in 0..outer {
        let s_base = o * n * inner;
        let d_base = o * m * inner;
        for (i, &(lo, hi, wl, wh)) in map.entries.iter().enumerate() {
            let g = &grad[d_base + i * inner..d_base + (i + 1) * inner];
            for (k, &gv) in g.iter().enumerate() {
                let t = s_base + lo * inner + k;
                if wh == T::zero() {
                    out[t] = out[t] + gv;
                } else {
                    out[t] = out[t] + wl * gv;
                    let u = s_base + hi * inner + k;
                    out[u] = out[u] + wh * gv;
                }
            }
        }
    }
    out
}

/// Integer node stride relating a coarse grid to the fine grid it was
/// subsampled from (node `j` of the coarse grid is fine node `j * stride`).
pub fn node_stride(coarse: &GridSpec, fine: &GridSpec) -> Result<usize> {
    if coarse.ndim() != fine.ndim() {
        return Err(Error::ShapeMismatch(format!(
            "{}D coarse grid against {}D fine grid",
            coarse.ndim(),
            fine.ndim()
        )));
    }
    let ratio = coarse.dx() / fine.dx();
    let s = ratio.round();
    if s < 1.0 || (ratio - s).abs() > 1e-9 * ratio {
        return Err(Error::InvalidArgument(format!(
            "coarse spacing {} is not an integer multiple of fine spacing {}",
            coarse.dx(),
            fine.dx()
        )));
    }
    let s = s as usize;
    for (&nc, &nf) in coarse.extents().iter().zip(fine.extents()) {
        if !((nc - 1) * s < nf && nf <= nc * s) {
            return Err(Error::InvalidArgument(format!(
                "{nc} coarse nodes at stride {s} are not a subset of {nf} fine nodes"
            )));
        }
    }
    Ok(s)
}

/// Keeps every `time_stride`-th frame and every `space_stride`-th node per
/// axis, always including frame 0 and node 0.
pub fn downsample<T: Real>(traj: &Trajectory<T>, space_stride: usize, time_stride: usize) -> Result<Trajectory<T>> {
    if space_stride == 0 || time_stride == 0 {
        return Err(Error::InvalidArgument("strides must be at least 1".into()));
    }
    let grid = traj.grid();
    let extents: Vec<usize> = grid.extents().iter().map(|n| n.div_ceil(space_stride)).collect();
    let coarse = GridSpec::new(extents, grid.dx() * space_stride as f64).map_err(|_| {
        Error::InvalidArgument(format!(
            "space stride {space_stride} leaves fewer than {} nodes on {:?}",
            super::MIN_EXTENT,
            grid.extents()
        ))
    })?;
    let fine_strides = grid.strides();
    let index: Vec<usize> = (0..coarse.len())
        .map(|i| {
            coarse
                .coords(i)
                .iter()
                .zip(&fine_strides)
                .map(|(x, s)| x * space_stride * s)
                .sum()
        })
        .collect();
    let frames = traj
        .frames()
        .iter()
        .step_by(time_stride)
        .map(|f| {
            let mut data = Vec::with_capacity(f.channels() * index.len());
            for c in 0..f.channels() {
                let ch = f.channel(c);
                data.extend(index.iter().map(|&i| ch[i]));
            }
            Field::from_raw(coarse.clone(), f.channels(), data)
        })
        .collect();
    Trajectory::new(frames, traj.dt() * time_stride as f64, traj.t0())
}

/// Bilinear (2D) or trilinear (3D) interpolation onto `target`, periodic
/// across the far edge and exact at coincident nodes.
pub fn interpolate<T: Real>(field: &Field<T>, target: &GridSpec) -> Result<Field<T>> {
    let src = field.grid();
    if src.ndim() != target.ndim() {
        return Err(Error::ShapeMismatch(format!(
            "cannot interpolate a {}D field onto a {}D grid",
            src.ndim(),
            target.ndim()
        )));
    }
    let maps = (0..src.ndim())
        .map(|a| AxisMap::between(src.extents()[a], src.dx(), target.extents()[a], target.dx()))
        .collect::<Result<Vec<AxisMap<T>>>>()?;
    let mut data = Vec::with_capacity(field.channels() * target.len());
    for c in 0..field.channels() {
        data.extend(resample_all(field.channel(c), src.extents(), &maps));
    }
    Ok(Field::from_raw(target.clone(), field.channels(), data))
}

pub(crate) fn resample_all<T: Real>(src: &[T], extents: &[usize], maps: &[AxisMap<T>]) -> Vec<T> {
    let mut shape = extents.to_vec();
    let mut buf = src.to_vec();
    for (axis, map) in maps.iter().enumerate() {
        buf = resample_axis(&buf, &shape, axis, map);
        shape[axis] = map.entries.len();
    }
    buf
}

pub(crate) fn resample_all_adjoint<T: Real>(grad: &[T], extents: &[usize], maps: &[AxisMap<T>]) -> Vec<T> {
    let mut shapes = vec![extents.to_vec()];
    for (axis, map) in maps.iter().enumerate() {
        let mut s = shapes.last().unwrap().clone();
        s[axis] = map.entries.len();
        shapes.push(s);
    }
    let mut buf = grad.to_vec();
    for (axis, map) in maps.iter().enumerate().rev() {
        buf = resample_axis_adjoint(&buf, &shapes[axis], axis, map);
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn traj(frames: usize, n: usize) -> Trajectory<f64> {
        let grid = GridSpec::cube(2, n, 0.01).unwrap();
        let fr = (0..frames)
            .map(|k| Field::from_fn(grid.clone(), 1, |_, x| (k * 1000 + x[0] * n + x[1]) as f64).unwrap())
            .collect();
        Trajectory::new(fr, 0.5, 0.0).unwrap()
    }

    #[test]
    fn gs_protocol_counts() {
        // frame count and grid size are checked separately to keep memory small
        let t = downsample(&traj(2501, 5), 1, 62).unwrap();
        assert_eq!(t.len(), 41);
        assert_eq!(t.dt(), 31.0);
        let s = downsample(&traj(1, 101), 4, 1).unwrap();
        assert_eq!(s.grid().extents(), &[26, 26]);
        assert_eq!(s.frame(0).at(0, &[25, 1]), (100 * 101 + 4) as f64);
    }

    #[test]
    fn burgers_protocol_counts() {
        let t = traj(1601, 5).truncate(401).unwrap();
        let d = downsample(&t, 1, 40).unwrap();
        assert_eq!(d.len(), 11);
        let s = downsample(&traj(1, 101), 2, 1).unwrap();
        assert_eq!(s.grid().extents(), &[51, 51]);
        assert!((s.grid().dx() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn unit_strides_are_identity() {
        let t = traj(4, 7);
        assert_eq!(downsample(&t, 1, 1).unwrap(), t);
    }

    #[test]
    fn too_coarse_is_rejected() {
        assert!(downsample(&traj(1, 9), 4, 1).is_err());
    }

    #[test]
    fn downsample_composes() {
        let t = traj(13, 25);
        let twice = downsample(&downsample(&t, 2, 3).unwrap(), 2, 2).unwrap();
        let once = downsample(&t, 4, 6).unwrap();
        assert_eq!(twice.frames(), once.frames());
        assert_eq!(twice.dt(), once.dt());
        assert_eq!(twice.grid().extents(), once.grid().extents());
    }

    #[test]
    fn constant_stays_constant() {
        let coarse = GridSpec::cube(2, 26, 0.04).unwrap();
        let fine = GridSpec::cube(2, 101, 0.01).unwrap();
        let f: Field<f64> = Field::constant(coarse, &[0.3, -2.0]);
        let g = interpolate(&f, &fine).unwrap();
        for c in 0..2 {
            let v = f.channel(c)[0];
            assert!(g.channel(c).iter().all(|&x| (x - v).abs() < 1e-15));
        }
    }

    #[test]
    fn ramp_midpoints_are_means() {
        let coarse = GridSpec::new(vec![6, 5], 0.2).unwrap();
        let fine = GridSpec::new(vec![12, 10], 0.1).unwrap();
        let f = Field::from_fn(coarse, 1, |_, x| 1.0 + 2.0 * x[0] as f64).unwrap();
        let g = interpolate(&f, &fine).unwrap();
        for i in 0..5 {
            let mid = g.at(0, &[2 * i + 1, 3]);
            assert_eq!(mid, 0.5 * (f.at(0, &[i, 1]) + f.at(0, &[i + 1, 1])));
            assert_eq!(g.at(0, &[2 * i, 4]), f.at(0, &[i, 2]));
        }
    }

    #[test]
    fn sine_upsampling_error() {
        let fine = GridSpec::cube(2, 101, 0.01).unwrap();
        let len = fine.domain_length(0);
        let coarse = GridSpec::cube(2, 26, 0.04).unwrap();
        let f = Field::from_fn(coarse, 1, |_, x| (2.0 * PI * x[0] as f64 * 0.04 / len).sin()).unwrap();
        let g = interpolate(&f, &fine).unwrap();
        let mut err = 0.0f64;
        for i in 0..fine.len() {
            let x = fine.coords(i);
            let exact = (2.0 * PI * x[0] as f64 * 0.01 / len).sin();
            err = err.max((g.channel(0)[i] - exact).abs());
        }
        assert!(err < 0.02, "max error {err}");
    }

    #[test]
    fn dimension_mismatch() {
        let f = Field::<f64>::zeros(GridSpec::cube(2, 5, 0.2).unwrap(), 1);
        assert!(matches!(
            interpolate(&f, &GridSpec::cube(3, 10, 0.1).unwrap()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn stride_detection() {
        let fine = GridSpec::cube(3, 49, 25.0 / 12.0).unwrap();
        let coarse = GridSpec::cube(3, 25, 25.0 / 6.0).unwrap();
        assert_eq!(node_stride(&coarse, &fine).unwrap(), 2);
        let odd = GridSpec::cube(3, 25, 25.0 / 7.0).unwrap();
        assert!(node_stride(&odd, &fine).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_is_exact_at_coarse_nodes(
            data in prop::collection::vec(-5.0f64..5.0, 36),
            s in 1usize..4,
            extra in 0usize..3,
        ) {
            let coarse = GridSpec::cube(2, 6, 0.1 * s as f64).unwrap();
            let nf = 5 * s + 1 + extra.min(s - 1);
            let fine = GridSpec::cube(2, nf, 0.1).unwrap();
            let f = Field::new(coarse.clone(), 1, data).unwrap();
            let g = interpolate(&f, &fine).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert_eq!(g.at(0, &[i * s, j * s]).to_bits(), f.at(0, &[i, j]).to_bits());
                }
            }
        }
    }
}
