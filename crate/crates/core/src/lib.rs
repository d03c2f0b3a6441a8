//! Principal eigenvalue of `−Δu = λ m u` with indefinite piecewise-constant
//! weights, and its optimization over rearrangement classes.
//!
//! - [`mesh`]: uniform interval/rectangle meshes and P1 assembly.
//! - [`rearrange`]: distribution functions, decreasing rearrangements,
//!   majorization and the Hardy–Littlewood pairings.
//! - [`eigen`]: principal eigenpair, spectrum oracle, derivative of `μ₁`.
//! - [`optimize`]: minimization and maximization of `λ₁` over a class, plus
//!   the property probes.
//! - [`cli`]: configuration files and experiment runs.

pub mod cli;
pub mod csv;
pub mod eigen;
pub mod error;
pub mod mesh;
pub mod optimize;
pub mod rearrange;

pub use error::{Error, Result};
