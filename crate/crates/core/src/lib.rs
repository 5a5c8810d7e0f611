//! Simulation laboratory for spiked tensor landscapes on the sphere of radius `√N`.
//!
//! The landscape is `H(x) = H₀(x) − Nλ φ(x₁/√N)` with a Gaussian mixed p-spin
//! noise `H₀`. The crate integrates Langevin dynamics and gradient descent on
//! it and measures recovery, initialization conditions and free-energy wells.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod conditions;
pub mod dynamics;
pub mod error;
pub mod freeenergy;
pub mod harness;
pub mod initializers;
pub mod landscape;
pub mod rng;
pub mod signal_oracle;

pub use error::{Error, Result};
pub use landscape::{Beta, Disorder, Landscape, MixtureSpec, SphereState};
