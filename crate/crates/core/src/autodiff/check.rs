use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Shape, Tape, TapeTensor};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub probes: usize,
    /// Largest relative error over probes whose gradient exceeds `atol`.
    pub max_rel_err: f64,
    /// Largest absolute error over the remaining probes.
    pub max_small_abs_err: f64,
    pub atol: f64,
}

impl GradCheck {
    pub fn passes(&self, rtol: f64) -> bool {
        self.max_rel_err < rtol && self.max_small_abs_err < self.atol
    }
}

/// Central-difference check of `f` (a scalar-valued graph over the given
/// inputs) at `probes` randomly chosen input entries.
pub fn gradient_check(
    inputs: &[(Vec<f64>, Shape)],
    probes: usize,
    eps: f64,
    seed: u64,
    f: impl Fn(&mut Tape<f64>, &[TapeTensor]) -> Result<TapeTensor>,
) -> Result<GradCheck> {
    let total: usize = inputs.iter().map(|(v, _)| v.len()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("gradient check needs at least one input entry".into()));
    }
    let eval = |values: &[Vec<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves = inputs
            .iter()
            .zip(values)
            .map(|((_, s), v)| tape.param(v.clone(), s.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = f(&mut tape, &leaves)?;
        Ok(tape.scalar(&loss))
    };
    let mut tape = Tape::new();
    let leaves = inputs
        .iter()
        .map(|(v, s)| tape.param(v.clone(), s.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &leaves)?;
    let grads = tape.backward(loss)?;

    let atol = 1e-8;
    let mut report = GradCheck { probes, max_rel_err: 0.0, max_small_abs_err: 0.0, atol };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(v, _)| v.clone()).collect();
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= values[which].len() {
            flat -= values[which].len();
            which += 1;
        }
        let orig = values[which][flat];
        values[which][flat] = orig + eps;
        let up = eval(&values)?;
        values[which][flat] = orig - eps;
        let down = eval(&values)?;
        values[which][flat] = orig;
        let fd = (up - down) / (2.0 * eps);
        let g = grads.get(leaves[which]).expect("leaf gradient")[flat];
        let scale = g.abs().max(fd.abs());
        if scale < atol {
            report.max_small_abs_err = report.max_small_abs_err.max((g - fd).abs());
        } else {
            report.max_rel_err = report.max_rel_err.max((g - fd).abs() / scale);
        }
    }
    Ok(report)
}
