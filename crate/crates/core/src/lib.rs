//! Estimation of the selected treatment mean in a two-stage drop-the-losers
//! design with two Gaussian arms and known common variance.
//!
//! Module map:
//! - [`normal`], [`quadrature`]: Gaussian kernels and deterministic quadrature.
//! - [`model`], [`stream`]: the trial model, sufficient statistics and
//!   counter-based random streams.
//! - [`estimators`]: the seven estimators and the generic improvement rule
//!   for location and permutation equivariant estimators.
//! - [`theory`]: closed-form densities, conditional moments and quadrature
//!   risk oracles.
//! - [`sim`]: seeded Monte Carlo sweeps with common random numbers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod model;
pub mod normal;
pub mod quadrature;
pub mod sim;
pub mod stream;
pub mod theory;

pub use error::{Error, Result};
