//! # cable-beam
//!
//! Simulation and analysis of a beam-shaped load hanging from two elastic
//! cables, each attached to an aerial robot running an admittance controller.
//! Robot 1 is the leader (non-zero virtual stiffness), robot 2 the follower
//! (zero virtual stiffness); neither communicates with the other.
//!
//! The controller only knows nominal values of the load mass, the centre of
//! mass location, the beam length and the cable parameters. The crate computes
//! where the closed loop actually settles under that mismatch, which of those
//! equilibria are stable, how sensitive the attitude error is to each
//! parameter, and how the leader can remove the residual position error.
//!
//! ## Modules
//!
//! - [`model`]: physical and nominal parameters, uncertainty bookkeeping
//! - [`dynamics`]: cable law, load rigid-body dynamics, closed-loop vector field
//! - [`control`]: admittance law, forcing-input synthesis, position correction
//! - [`equilibria`]: equilibria reached under a nominal forcing input
//! - [`analysis`]: Lyapunov function, stability verdicts, error sensitivities
//! - [`sim`]: fixed-step RK4 integration and scenario state machine
//! - [`cli`]: configuration files, sweeps and report writers

pub mod analysis;
pub mod cli;
pub mod control;
pub mod dynamics;
pub mod equilibria;
mod error;
pub mod math;
pub mod model;
pub mod sim;

pub use error::{Error, Result};

use nalgebra::{Matrix3, Vector3};

/// 3D vector type
pub type Vec3 = Vector3<f64>;

/// 3x3 matrix type
pub type Mat3 = Matrix3<f64>;
