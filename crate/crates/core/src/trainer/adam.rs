use crate::model::Param;
use crate::scalar::Real;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with bias-corrected moments and a constant learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, params: &[Param<T>]) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Adam { lr, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Vec<T>]) {
        self.t += 1;
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let c1 = T::one() - b1.powi(self.t as i32);
        let c2 = T::one() - b2.powi(self.t as i32);
        let (lr, eps) = (T::of(self.lr), T::of(EPS));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value[i] = p.value[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
