//! Simulation and analysis toolkit for the magnetized one-component plasma.
//!
//! The crate follows the chain from equilibrium microfield statistics to the
//! order-to-chaos threshold of the electron gyration motion:
//!
//! - [`params`]: constants, unit reduction and closed-form predictions
//!   (cyclotron and plasma frequencies, perturbation parameter, density limit).
//! - [`ocp_model`]: periodic one-component plasma, Ewald microfield and energy,
//!   plus a brute-force image-sum oracle.
//! - [`sampler`]: Metropolis sampling of the Gibbs measure and microfield
//!   statistics (including the Iglesias-Lebowitz-MacGowan sum rule).
//! - [`dynamics`]: Boris integration of the magnetized equations of motion.
//! - [`observables`]: adiabatic invariant, autocorrelation, perturbation
//!   parameter, decorrelation time, short-time bound, twin-trajectory growth.
//! - [`sweep`]: magnetization sweeps and threshold location.
//! - [`machines`]: empirical density-limit records, residuals and SVG export.

pub mod dynamics;
pub mod error;
pub mod machines;
pub mod observables;
pub mod ocp_model;
pub mod params;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod sweep;
pub mod vec3;

pub use error::{Error, Result};
