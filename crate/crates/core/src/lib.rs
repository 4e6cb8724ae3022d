//! Controlled-SDE sampling of imaginary-time path integrals.
//!
//! Thermal propagators, partition functions and equal-time correlation
//! functions of single-particle systems and the quantum rotor chain are
//! computed in two steps: a drift-control function is trained by minimizing
//! a variational cost over stochastic paths, and the trained control is then
//! reused as an importance sampler whose estimates are exact in expectation
//! for any control. Independent exact-diagonalization and closed-form
//! oracles back the test suite.

pub mod boundary;
pub mod control;
pub mod error;
pub mod estimators;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod sde;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
