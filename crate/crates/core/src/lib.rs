//! Exponential decay rates of survival probabilities for random walks
//! confined to polyhedral cones.
//!
//! For a walk `S_n = x + X_1 + ... + X_n` with i.i.d. increments and exit
//! time `τ = inf{n : S_n ∉ K}`, the library computes
//! `ρ = lim (P^x(τ > n) - P^x(τ = ∞))^{1/n}` through a convex variational
//! formula, and provides an exact lattice DP and a Monte Carlo estimator to
//! check it.

// `!(a > b)` is used deliberately so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod distributions;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod oracle_dp;
pub mod rate;

pub use distributions::{AtomicDistribution, Distribution, GaussianDistribution};
pub use geometry::Pyramid;
pub use rate::{compute_rate, compute_rate_with, RateOptions, RateReport};

/// Library version, embedded in every output document.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
