//! Physics-embedded recurrent-convolutional networks for learning
//! reaction-diffusion and Burgers dynamics from sparse, noisy snapshots.
//!
//! Numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which every command-line path uses.

pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod field;
pub mod metrics;
pub mod model;
pub mod interpret;
pub(crate) mod kernel;
pub mod scalar;
pub mod solver;
pub mod stencil;
pub mod trainer;

pub use error::{Error, Result};
pub use field::{GridSpec, PaddingMode};
pub use scalar::Real;

pub type Field64 = field::Field<f64>;
pub type Trajectory64 = field::Trajectory<f64>;
pub type Field32 = field::Field<f32>;
pub type Trajectory32 = field::Trajectory<f32>;
