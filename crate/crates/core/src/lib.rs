//! Ensemble forward selection for linear regression.
//!
//! Forward selection picks one feature per step — the one most correlated
//! with the current residual. Its ensemble variant restricts each step to a
//! uniformly drawn subset of `m` of the remaining features, runs `B` such
//! randomized fits, and averages them. As `B` grows, on orthogonal designs
//! the average collapses to a deterministic shrinkage rule: the coefficient
//! of the feature with the `j`-th largest least-squares magnitude is damped
//! by the probability `w_j` that rank `j` is ever selected. This crate
//! computes those weights exactly, estimates them by simulation, evaluates
//! their large-`p` asymptotics, and provides the fitting procedures and the
//! analysis and experiment protocols built on top of them.
//!
//! Module map:
//!
//! - [`weights`] — selection-probability weights: exact dynamic program,
//!   brute-force enumeration, Monte Carlo estimates, asymptotic and limiting
//!   regimes, logistic approximation, and sandwich bounds.
//! - [`greedy`] — design-matrix plumbing and the fitting procedures: plain
//!   forward selection, single randomized base fits, sampled ensembles, and
//!   the closed-form infinite-ensemble model on certified orthonormal designs.
//! - [`analysis`] — degrees-of-freedom estimation, the rank-wise df
//!   decomposition, training-error gaps, prediction-error decomposition,
//!   weight-vector majorization checks, the elastic-net comparison point, and
//!   a design construction on which ensembling escapes a greedy trap.
//! - [`simlab`] — banded-Gaussian data generation, noise calibration from a
//!   target signal-to-noise ratio, cross-validated subset-size selection, and
//!   the full df/training-error experiment protocol.
//! - [`exec`] — a minimal deterministic executor abstraction so the one
//!   long-running protocol ([`simlab::run_experiment`]) can fan out across
//!   threads without changing its output.
//!
//! The crate is `no_std` (with `alloc`): everything operates on plain slices
//! and `Vec`s, transcendentals come from `libm`, and all randomness flows
//! through explicitly seeded, stream-split ChaCha generators so every result
//! is reproducible bit-for-bit for a given seed, on any platform and any
//! thread count.
#![no_std]
#![deny(unsafe_code)]
#![warn(missing_docs)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod exec;
pub mod greedy;
mod rng;
pub mod simlab;
pub mod weights;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
