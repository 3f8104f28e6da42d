//! Particle-based approximate inference with Stein variational gradient
//! descent and matrix-valued kernels.
//!
//! The crate is organized bottom-up:
//!
//! - [`psdlin`]: symmetric eigen-based linear algebra for preconditioners.
//! - [`targets`]: log densities, gradients, curvature and reference samplers.
//! - [`kernels`]: scalar, constant-preconditioned, mixture and diagonal
//!   matrix-valued kernels together with their Stein directions.
//! - [`dynamics`]: the particle update loop, preconditioner refresh, the
//!   Stein variational Newton baseline and the Adagrad stepper.
//! - [`metrics`]: MMD and predictive metrics.
//! - [`harness`]: configuration, experiment orchestration and output files.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod particles;
pub mod psdlin;
pub mod targets;

pub use error::{Error, Result};
pub use particles::ParticleSet;
