use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Field, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Adds i.i.d. Gaussian noise whose standard deviation is `level` times the
/// per-channel standard deviation of the whole trajectory.
pub fn add_noise<T: Real>(traj: &Trajectory<T>, level: f64, seed: u64) -> Result<Trajectory<T>> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {level}")));
    }
    if level == 0.0 {
        return Ok(traj.clone());
    }
    let sigma: Vec<f64> = (0..traj.channels()).map(|c| level * channel_std(traj, c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = traj
        .frames()
        .iter()
        .map(|f| {
            let mut out = f.clone();
            for (c, &s) in sigma.iter().enumerate() {
                for v in out.channel_mut(c) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = *v + T::of(s * z);
                }
            }
            out
        })
        .collect::<Vec<Field<T>>>();
    Trajectory::new(frames, traj.dt(), traj.t0())
}

/// Population standard deviation of one channel over every frame.
pub(crate) fn channel_std<T: Real>(traj: &Trajectory<T>, c: usize) -> f64 {
    let n = (traj.len() * traj.grid().len()) as f64;
    let mean = traj.frames().iter().flat_map(|f| f.channel(c)).map(|v| v.as_f64()).sum::<f64>() / n;
    let var = traj
        .frames()
        .iter()
        .flat_map(|f| f.channel(c))
        .map(|v| (v.as_f64() - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}
