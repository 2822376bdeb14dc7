use crate::error::{Error, Result};
use crate::field::{PaddingMode, Trajectory};
use crate::scalar::Real;
use crate::stencil::laplacian;

/// Nodes this close to an edge are left out; coarse grids taken from a
/// periodic fine grid need not be evenly spaced across the wrap.
const EDGE: usize = 2;

/// Per-channel least-squares fit of `u_t = μ Δu`, with forward time
/// differences between consecutive frames against the coarse-grid Laplacian
/// of the earlier frame.
pub fn estimate_diffusion<T: Real>(traj: &Trajectory<T>) -> Result<Vec<f64>> {
    if traj.len() < 2 {
        return Err(Error::InvalidArgument(format!("diffusion estimate needs 2 frames, got {}", traj.len())));
    }
    let grid = traj.grid();
    let interior: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.coords(i).iter().zip(grid.extents()).all(|(&x, &n)| x >= EDGE && x + EDGE < n))
        .collect();
    let laps = traj
        .frames()
        .iter()
        .take(traj.len() - 1)
        .map(|f| laplacian(f, &PaddingMode::Periodic))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(traj.channels());
    for c in 0..traj.channels() {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..traj.len() - 1 {
            let (a, b) = (traj.frame(k).channel(c), traj.frame(k + 1).channel(c));
            let la = laps[k].channel(c);
            for &i in &interior {
                let ut = (b[i].as_f64() - a[i].as_f64()) / traj.dt();
                let l = la[i].as_f64();
                num += ut * l;
                den += l * l;
            }
        }
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::Degenerate(format!("channel {c} has no spatial variation")));
        }
        let mu = num / den;
        if !(mu > 0.0) {
            return Err(Error::Degenerate(format!("channel {c} gives a non-positive diffusion estimate {mu:e}")));
        }
        out.push(mu);
    }
    Ok(out)
}
