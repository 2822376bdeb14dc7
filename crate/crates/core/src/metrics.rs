//! Accumulative RMSE and finite-difference physics residuals of trajectories.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::scalar::Real;
use crate::solver::{rhs, PdeSystem};

/// Values sampled at strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ErrorCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::ShapeMismatch(format!("{} times for {} values", times.len(), values.len())));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("curve times must increase strictly".into()));
        }
        Ok(ErrorCurve { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Value at the sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.values[i])
    }
}

fn check_pair<T: Real>(pred: &Trajectory<T>, reference: &Trajectory<T>) -> Result<()> {
    if pred.grid() != reference.grid() || pred.channels() != reference.channels() || pred.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} frames of {:?}x{}, reference {} of {:?}x{}",
            pred.len(),
            pred.grid().extents(),
            pred.channels(),
            reference.len(),
            reference.grid().extents(),
            reference.channels()
        )));
    }
    if (pred.dt() - reference.dt()).abs() > 1e-12 * reference.dt() {
        return Err(Error::ShapeMismatch(format!("time steps differ: {} vs {}", pred.dt(), reference.dt())));
    }
    Ok(())
}

/// `RMSE(t_k) = sqrt(1/(n (k+1)) Σ_{i<=k} |U_i - U_ref,i|²)` with `n` entries per frame.
pub fn accumulative_rmse<T: Real>(pred: &Trajectory<T>, reference: &Trajectory<T>) -> Result<ErrorCurve> {
    check_pair(pred, reference)?;
    let n = pred.frame(0).data().len() as f64;
    let mut sum = 0.0;
    let mut values = Vec::with_capacity(pred.len());
    for (k, (a, b)) in pred.frames().iter().zip(reference.frames()).enumerate() {
        sum += a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>();
        values.push((sum / (n * (k + 1) as f64)).sqrt());
    }
    ErrorCurve::new((0..pred.len()).map(|k| pred.time(k)).collect(), values)
}

/// RMS residual of `(U_{k+1} - U_{k-1}) / 2dt - F(U_k)` at every interior frame.
pub fn physics_error<T: Real>(pred: &Trajectory<T>, system: &PdeSystem) -> Result<ErrorCurve> {
    if pred.len() < 3 {
        return Err(Error::InvalidArgument(format!("physics error needs 3 frames, got {}", pred.len())));
    }
    let inv = 1.0 / (2.0 * pred.dt());
    let mut times = Vec::with_capacity(pred.len() - 2);
    let mut values = Vec::with_capacity(pred.len() - 2);
    for k in 1..pred.len() - 1 {
        let f = rhs(system, pred.frame(k))?;
        let (next, prev) = (pred.frame(k + 1).data(), pred.frame(k - 1).data());
        let ss: f64 = f
            .data()
            .iter()
            .enumerate()
            .map(|(i, r)| ((next[i].as_f64() - prev[i].as_f64()) * inv - r.as_f64()).powi(2))
            .sum();
        times.push(pred.time(k));
        values.push((ss / f.data().len() as f64).sqrt());
    }
    ErrorCurve::new(times, values)
}

/// CSV with columns `t,rmse,physics_error`; the residual is left empty at
/// frames it is not defined for.
pub fn metrics_csv(rmse: &ErrorCurve, physics: Option<&ErrorCurve>) -> String {
    let mut out = String::from("t,rmse,physics_error\n");
    let mut j = 0;
    for (t, r) in rmse.times().iter().zip(rmse.values()) {
        let _ = write!(out, "{t},{r},");
        if let Some(p) = physics {
            while j < p.len() && p.times()[j] < t - 1e-12 * t.abs().max(1.0) {
                j += 1;
            }
            if j < p.len() && (p.times()[j] - t).abs() <= 1e-12 * t.abs().max(1.0) {
                let _ = write!(out, "{}", p.values()[j]);
            }
        }
        out.push('\n');
    }
    out
}

/// CSV with a time column followed by one column per curve; the curves must
/// share their time points.
pub fn curves_csv(names: &[&str], curves: &[&ErrorCurve]) -> Result<String> {
    if names.len() != curves.len() || curves.is_empty() {
        return Err(Error::InvalidArgument("one name per curve, at least one curve".into()));
    }
    let times = curves[0].times();
    if curves.iter().any(|c| c.times() != times) {
        return Err(Error::ShapeMismatch("curves are sampled at different times".into()));
    }
    let mut out = format!("t,{}\n", names.join(","));
    for (k, t) in times.iter().enumerate() {
        let _ = write!(out, "{t}");
        for c in curves {
            let _ = write!(out, ",{}", c.values()[k]);
        }
        out.push('\n');
    }
    Ok(out)
}
