//! Multistatic OFDM sensing: signal simulation, Bayesian fusion of
//! per-pair matched-filter spectra, prior-constrained estimators, baseline
//! fusion schemes and the Monte Carlo harness behind the `sense` binary.

// NaN must fail every positivity check, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod scenario;
pub mod scene;
pub mod solvers;
pub mod waveform;

pub use error::{Result, SenseError};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
