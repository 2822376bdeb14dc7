#![allow(dead_code)]

use percnn::field::{Field, GridSpec, PaddingMode};
use percnn::model::{FrozenChannel, HighwayConfig, IsgConfig, ModelConfig, PercnnModel, PiBlockConfig};
use percnn::stencil::DiffOp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn config(n_layers: usize, n_channels: usize, kernel: usize, upper: Option<Vec<f64>>, dt: f64) -> ModelConfig {
    ModelConfig {
        pi: PiBlockConfig { n_layers, n_channels, kernel, bias: true, frozen_first_layer: None },
        isg: IsgConfig { hidden: 4, kernel: 3, trainable: false },
        highway: HighwayConfig { enabled: upper.is_some(), upper },
        dt,
        bc: PaddingMode::Periodic,
    }
}

/// Product block set to the Gray-Scott reaction, highway to the true diffusion.
pub fn gray_scott_model(grid: &GridSpec, mu: [f64; 2], kappa: f64, feed: f64, dt: f64) -> PercnnModel<f64> {
    let cfg = config(3, 3, 1, Some(vec![2.0 * mu[0], 2.0 * mu[1]]), dt);
    let mut m = PercnnModel::new(cfg, 2, grid.clone(), grid.clone(), 0).unwrap();
    // channels: u*v*v, u, v
    m.set_param("pi.layer0.weight", vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
    m.set_param("pi.layer0.bias", vec![0.0; 3]).unwrap();
    for l in 1..3 {
        m.set_param(&format!("pi.layer{l}.weight"), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        m.set_param(&format!("pi.layer{l}.bias"), vec![0.0, 1.0, 1.0]).unwrap();
    }
    m.set_param("pi.mix.weight", vec![-1.0, -feed, 0.0, 1.0, 0.0, -(feed + kappa)]).unwrap();
    m.set_param("pi.mix.bias", vec![feed, 0.0]).unwrap();
    m
}

pub fn burgers_frozen_config(upper: f64, dt: f64) -> ModelConfig {
    let frozen = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .map(|&(input, axis)| FrozenChannel { input, op: DiffOp::Derivative(axis) })
        .collect();
    ModelConfig {
        pi: PiBlockConfig { n_layers: 2, n_channels: 4, kernel: 1, bias: true, frozen_first_layer: Some(frozen) },
        isg: IsgConfig { hidden: 4, kernel: 3, trainable: false },
        highway: HighwayConfig { enabled: true, upper: Some(vec![upper, upper]) },
        dt,
        bc: PaddingMode::Periodic,
    }
}

/// Frozen-derivative block set to `-(u·∇)u`, highway to `ν`.
pub fn burgers_model(grid: &GridSpec, nu: f64, dt: f64) -> PercnnModel<f64> {
    let mut m = PercnnModel::new(burgers_frozen_config(2.0 * nu, dt), 2, grid.clone(), grid.clone(), 0).unwrap();
    m.set_param("pi.layer1.weight", vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
    m.set_param("pi.layer1.bias", vec![0.0; 4]).unwrap();
    m.set_param("pi.mix.weight", vec![-1.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, -1.0]).unwrap();
    m.set_param("pi.mix.bias", vec![0.0; 2]).unwrap();
    m
}

pub fn smooth_field(grid: &GridSpec, seed: u64) -> Field<f64> {
    let c = random(8, seed);
    let n: Vec<f64> = grid.extents().iter().map(|&e| e as f64).collect();
    Field::from_fn(grid.clone(), 2, |ch, x| {
        let a = std::f64::consts::TAU * x[0] as f64 / n[0];
        let b = std::f64::consts::TAU * x[1] as f64 / n[1];
        let k = 4 * ch;
        0.5 + 0.2 * c[k] * a.sin() + 0.2 * c[k + 1] * b.cos() + 0.1 * c[k + 2] * (a + b).sin() + 0.1 * c[k + 3] * (2.0 * a).cos()
    })
    .unwrap()
}
