use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PaddingMode;
use crate::stencil::DiffOp;

fn yes() -> bool {
    true
}

fn periodic() -> PaddingMode {
    PaddingMode::Periodic
}

/// One channel of a fixed-stencil layer: `op` applied to state channel `input`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenChannel {
    pub input: usize,
    pub op: DiffOp,
}

/// Product block: `n_layers` parallel convolutions mapping the state to
/// `n_channels` feature maps, multiplied elementwise and mixed back to the
/// state channels by a pointwise convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiBlockConfig {
    pub n_layers: usize,
    pub n_channels: usize,
    /// Filter size of the trainable parallel layers.
    pub kernel: usize,
    /// Biases on the trainable parallel layers and on the mixing layer.
    #[serde(default = "yes")]
    pub bias: bool,
    /// Replaces layer 0 by fixed stencils, one entry per feature channel.
    #[serde(default)]
    pub frozen_first_layer: Option<Vec<FrozenChannel>>,
}

/// Decoder from the coarse initial measurement to the fine initial state:
/// interpolation plus a convolutional correction `conv(conv(tanh(conv(·))))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsgConfig {
    pub hidden: usize,
    pub kernel: usize,
    /// Without the correction the initial state is the plain interpolation.
    #[serde(default = "yes")]
    pub trainable: bool,
}

/// Fixed Laplacian branch scaled by a bounded trainable coefficient per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighwayConfig {
    pub enabled: bool,
    /// Upper coefficient bounds; estimated from the data as `2 μ̃` when absent.
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub pi: PiBlockConfig,
    pub isg: IsgConfig,
    pub highway: HighwayConfig,
    /// Recurrent (Euler) time step.
    pub dt: f64,
    #[serde(default = "periodic")]
    pub bc: PaddingMode,
}

fn check_kernel(what: &str, k: usize) -> Result<()> {
    if matches!(k, 1 | 3 | 5) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} filter size must be 1, 3 or 5, got {k}")))
    }
}

impl ModelConfig {
    pub fn validate(&self, channels: usize, ndim: usize) -> Result<()> {
        let pi = &self.pi;
        if pi.n_layers == 0 || pi.n_channels == 0 {
            return Err(Error::Config("product block needs at least one layer and one channel".into()));
        }
        check_kernel("product block", pi.kernel)?;
        if let Some(frozen) = &pi.frozen_first_layer {
            if frozen.len() != pi.n_channels {
                return Err(Error::Config(format!(
                    "frozen layer lists {} channels, block has {}",
                    frozen.len(),
                    pi.n_channels
                )));
            }
            for f in frozen {
                if f.input >= channels {
                    return Err(Error::Config(format!("frozen channel reads state channel {}", f.input)));
                }
                if let DiffOp::Derivative(a) = f.op {
                    if a >= ndim {
                        return Err(Error::Config(format!("derivative axis {a} on a {ndim}D grid")));
                    }
                }
            }
        }
        if self.isg.hidden == 0 {
            return Err(Error::Config("ISG needs at least one hidden channel".into()));
        }
        check_kernel("ISG", self.isg.kernel)?;
        if let Some(upper) = &self.highway.upper {
            if upper.len() != channels || upper.iter().any(|&u| !(u.is_finite() && u > 0.0)) {
                return Err(Error::Config(format!(
                    "highway upper bounds must be {channels} positive values, got {upper:?}"
                )));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("model dt must be positive, got {}", self.dt)));
        }
        self.bc.check_channels(channels).map_err(|e| Error::Config(e.to_string()))
    }
}
