//! Numerical verification of Lebesgue-norm bounds for the Boltzmann gain operator.
//!
//! The crate evaluates the gain operator `Q⁺` and its angular part `𝒫` for
//! elastic and inelastic collision kernels, computes the explicit constants
//! of the corresponding Young, Hardy–Littlewood–Sobolev and weighted bounds,
//! and checks the bounds on test functions through configurable campaigns.

pub mod config_io;
pub mod constants;
pub mod error;
pub mod extremals;
pub mod geometry;
pub mod gridfn;
pub mod kernels;
pub mod operators;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
