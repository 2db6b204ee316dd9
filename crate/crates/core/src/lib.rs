//! Bayesian case-influence diagnostics.
//!
//! Posterior draws come from a Hamiltonian Monte Carlo sampler ([`hmc`]);
//! each observation is then scored by a functional Bregman divergence between
//! the full posterior and the posterior with that observation perturbed
//! ([`influence`]). Scores are normalized to sum to one so that, in the
//! absence of influential points, each is expected to sit near `1/n`.
//!
//! Three posterior models are provided in [`models`]: Bayesian logistic
//! regression, a quadratic trend-surface spatial regression with independent
//! errors, and GARCH(1,1) with normal or Student-t innovations. The
//! [`sim`] module contains the replication harness used to study estimator
//! bias and influence detection on simulated data.

pub mod bregman;
pub mod data;
pub mod error;
pub mod hmc;
pub mod influence;
pub mod models;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
