//! Density control for Gaussian splats under stochastic supervision.
//!
//! The crate contrasts two ways of deciding where a splat population should
//! grow:
//!
//! * the classic rule that thresholds the windowed mean of positional
//!   gradient norms, and
//! * a gated rule that tracks bias-corrected gradient moments per primitive
//!   and densifies only primitives that are both in the top quantile of
//!   momentum norm and have an intrinsic SNR above a floor.
//!
//! Everything runs on a small differentiable 2D splatting task whose targets
//! can be made stochastic (white noise plus a heavy-tailed per-step gradient
//! multiplier), which is the regime where the two rules diverge.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which is what the experiment harness uses.

pub mod controller;
pub mod error;
pub mod harness;
pub mod io;
pub mod moments;
pub mod primitives;
pub mod scalar;
pub mod stats;
pub mod toysplat;

pub use error::{Error, Result};
pub use scalar::{Scalar, Vec2};

pub type Primitive64 = primitives::Primitive<f64>;
pub type Population64 = primitives::Population<f64>;
pub type Population32 = primitives::Population<f32>;
pub type MomentState64 = moments::MomentState<f64>;
pub type MomentConfig64 = moments::MomentConfig<f64>;
pub type ControllerConfig64 = controller::ControllerConfig<f64>;
pub type RenderGrid64 = toysplat::RenderGrid<f64>;
pub type TargetModel64 = toysplat::TargetModel<f64>;
