//! Weakly coupled chaotic maps and the statistics of their macroscopic response.
//!
//! A single logistic-map variable `Q` is driven by the coupling sum `Z` of `M`
//! heterogeneous logistic units, each advanced as a cocycle over a doubling
//! map. The crate provides:
//!
//! - [`micro`]: forward simulation of the full deterministic system;
//! - [`law`]: the raised-cosine parameter law and its ε-perturbation;
//! - [`reduction`]: per-parameter logistic statistics, quadrature over the
//!   law, spectral factorization of the driver covariance and the reduced
//!   (stochastic, deterministic and finite-size) limit systems;
//! - [`response`]: Green–Kubo variances, weighted polynomial fits and the χ²
//!   test for linear and higher-order response;
//! - [`moments`]: fixed-time ensemble moments of `Q` against the stochastic limit;
//! - [`stats`]: small goodness-of-fit helpers shared by tests and the CLI.
//!
//! Every random quantity is drawn from a [`rng::SeedTree`] stream, so results
//! are bit-reproducible given the master seed, independent of thread count.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
mod lanes;
pub mod law;
pub mod micro;
pub mod moments;
pub mod reduction;
pub mod response;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
