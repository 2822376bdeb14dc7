use super::{EvalConfig, ExperimentConfig, GenerateConfig, GridConfig, SampleConfig};
use crate::field::PaddingMode;
use crate::model::{FrozenChannel, HighwayConfig, IsgConfig, ModelConfig, PiBlockConfig};
use crate::solver::PdeSystem;
use crate::stencil::DiffOp;
use crate::trainer::TrainConfig;

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &["burgers2d", "gs2d", "gs3d", "burgers-desk", "burgers-desk-clean", "gs2d-desk", "gs3d-mini"];

fn pi(n_layers: usize, n_channels: usize, kernel: usize) -> PiBlockConfig {
    PiBlockConfig { n_layers, n_channels, kernel, bias: true, frozen_first_layer: None }
}

/// Layer 0 fixed to `[u_x, u_y, v_x, v_y]`, layer 1 pointwise.
fn frozen_derivatives() -> PiBlockConfig {
    let frozen = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .map(|&(input, axis)| FrozenChannel { input, op: DiffOp::Derivative(axis) })
        .collect();
    PiBlockConfig { n_layers: 2, n_channels: 4, kernel: 1, bias: true, frozen_first_layer: Some(frozen) }
}

fn isg(trainable: bool) -> IsgConfig {
    IsgConfig { hidden: 8, kernel: 5, trainable }
}

fn estimated() -> HighwayConfig {
    HighwayConfig { enabled: true, upper: None }
}

fn train(lr: f64, lambda: f64, max_epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig { lambda, max_epochs, patience, ..TrainConfig::new(lr) }
}

fn burgers(name: &str, steps: usize, noise: f64, model: ModelConfig, train: TrainConfig, extra: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        system: PdeSystem::burgers2d(),
        grid: GridConfig { extents: vec![101, 101], dx: 0.01 },
        generate: GenerateConfig { dt: 2.5e-4, steps, record_every: 1, seed: 0, ic: None },
        sample: SampleConfig { frames: Some(401), space_stride: 2, time_stride: 40, noise, seed: 1 },
        model,
        train,
        eval: EvalConfig { extra_steps: extra },
    }
}

fn gs(name: &str, system: PdeSystem, grid: GridConfig, steps: usize, sample: SampleConfig, model: ModelConfig, train: TrainConfig, extra: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        system,
        grid,
        generate: GenerateConfig { dt: 0.5, steps, record_every: 1, seed: 0, ic: None },
        sample,
        model,
        train,
        eval: EvalConfig { extra_steps: extra },
    }
}

/// Built-in experiment by name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let periodic = PaddingMode::Periodic;
    let cfg = match name {
        "burgers2d" => burgers(
            name,
            1600,
            0.1,
            ModelConfig { pi: pi(2, 8, 5), isg: isg(true), highway: estimated(), dt: 2.5e-4, bc: periodic },
            train(0.005, 0.1, 5000, 200),
            1200,
        ),
        "burgers-desk" => burgers(
            name,
            1200,
            0.1,
            ModelConfig { pi: frozen_derivatives(), isg: isg(false), highway: estimated(), dt: 2.5e-4, bc: periodic },
            train(0.03, 0.1, 300, 100),
            800,
        ),
        "burgers-desk-clean" => burgers(
            name,
            1200,
            0.0,
            ModelConfig { pi: frozen_derivatives(), isg: isg(false), highway: estimated(), dt: 2.5e-4, bc: periodic },
            train(0.03, 0.0, 300, 100),
            800,
        ),
        "gs2d" => gs(
            name,
            PdeSystem::gs2d(),
            GridConfig { extents: vec![101, 101], dx: 0.01 },
            2500,
            SampleConfig { frames: Some(801), space_stride: 4, time_stride: 20, noise: 0.1, seed: 1 },
            ModelConfig {
                pi: pi(3, 8, 1),
                isg: isg(true),
                highway: HighwayConfig { enabled: true, upper: Some(vec![6e-5, 6e-5]) },
                dt: 0.5,
                bc: periodic,
            },
            train(0.005, 0.1, 5000, 200),
            1700,
        ),
        "gs2d-desk" => gs(
            name,
            PdeSystem::gs2d(),
            GridConfig { extents: vec![51, 51], dx: 0.01 },
            800,
            SampleConfig { frames: Some(401), space_stride: 2, time_stride: 20, noise: 0.1, seed: 1 },
            ModelConfig {
                pi: pi(3, 4, 1),
                isg: IsgConfig { hidden: 4, kernel: 3, trainable: true },
                highway: HighwayConfig { enabled: true, upper: Some(vec![6e-5, 6e-5]) },
                dt: 0.5,
                bc: periodic,
            },
            train(0.01, 0.1, 200, 50),
            400,
        ),
        "gs3d" => gs(
            name,
            PdeSystem::gs3d(),
            GridConfig { extents: vec![49, 49, 49], dx: 25.0 / 12.0 },
            1500,
            SampleConfig { frames: Some(301), space_stride: 2, time_stride: 15, noise: 0.1, seed: 1 },
            ModelConfig { pi: pi(3, 8, 1), isg: isg(true), highway: estimated(), dt: 0.5, bc: periodic },
            train(0.005, 0.1, 5000, 200),
            700,
        ),
        "gs3d-mini" => gs(
            name,
            PdeSystem::gs3d(),
            GridConfig { extents: vec![49, 49, 49], dx: 25.0 / 12.0 },
            300,
            SampleConfig { frames: Some(301), space_stride: 2, time_stride: 15, noise: 0.1, seed: 1 },
            ModelConfig {
                pi: pi(3, 4, 1),
                isg: IsgConfig { hidden: 4, kernel: 3, trainable: true },
                highway: estimated(),
                dt: 0.5,
                bc: periodic,
            },
            train(0.01, 0.1, 100, 50),
            0,
        ),
        _ => return None,
    };
    Some(cfg)
}
