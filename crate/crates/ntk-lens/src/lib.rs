//! Train small dense networks and watch their empirical neural tangent
//! kernel evolve.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense matrices and a cyclic Jacobi symmetric eigensolver,
//! - [`nn`]: multilayer perceptrons, losses, per-sample Jacobians, optimizers,
//! - [`ntk`]: empirical tangent kernels, spectra, and the layerwise
//!   conjugate-kernel decomposition,
//! - [`dynamics`]: collective variables tracked over training (trace,
//!   effective rank, adaptation rate, alignment),
//! - [`data`]: dataset loading (IDX, CIFAR binary), synthetic clusters, and
//!   label-noise surgery,
//! - [`experiments`]: sweep configuration, deterministic seeding, ensemble
//!   runners, power-law fits, and on-disk records,
//! - [`verify`]: a self-check battery over frozen oracles,
//! - [`plots`]: TSV/SVG export of recorded traces.

pub mod data;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod nn;
pub mod ntk;
pub mod plots;
pub mod verify;

pub use error::{Error, Result};

/// Crate version, recorded in run headers so stored results can be traced
/// back to the code that produced them.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
