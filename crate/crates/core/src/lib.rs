//! Simulation and verification toolkit for normal approximation of
//! Poisson functionals on random geometric graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: observation windows, cone covers, incomplete beta and
//!   ball/cap volume fractions.
//! - [`sampling`]: seeded (marked) Poisson point processes.
//! - [`graphs`]: online nearest neighbour graph, Gilbert graph, k-nearest
//!   neighbour graph and radial spanning tree, each with a grid-accelerated
//!   builder and a brute-force builder.
//! - [`functionals`]: edge functionals, first and second order add-one
//!   costs, stabilisation radii.
//! - [`estimators`]: Monte Carlo experiments, distances to normality,
//!   variance scaling fits, Mecke and p-Poincaré checks.
//! - [`constants`]: closed-form and numerically integrated constants of the
//!   critical online nearest neighbour variance.
//! - [`cli`]: the `rgg` command line front end.

pub mod cli;
pub mod constants;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod geometry;
pub mod graphs;
pub mod quadrature;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
