//! Numerical laboratory for periodic homogenization of the stochastic
//! variable-density incompressible Navier-Stokes system with rapidly
//! oscillating coefficients.
//!
//! The crate solves the periodic cell problem for correctors and the
//! effective diffusion tensor, advances the oscillating and homogenized
//! systems under shared noise, and measures the convergence and corrector
//! errors across an epsilon ladder.

pub mod cell;
pub mod config;
pub mod convergence;
pub mod error;
pub mod mac_grid;
pub mod noise;
pub mod solver;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
