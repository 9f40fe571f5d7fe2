//! Plug-and-play inference for partially observed Markov state-space models.
//!
//! The crate chains cheap approximate algorithms into exact ones:
//!
//! * [`optimize::lhs_sample`] / [`optimize::lhs_screen`] scatter points over the
//!   prior box and rank them with the extended Kalman filter likelihood;
//! * [`optimize::ksimplex`] climbs from the best point with Nelder–Mead over the
//!   EKF likelihood ([`optimize::simplex`] does the same on the ODE skeleton);
//! * [`mcmc::run_chain`] with the [`mcmc::EkfBackend`] (`kmcmc`) explores the
//!   approximate posterior and yields an empirical covariance;
//! * [`mcmc::run_chain`] with the [`mcmc::PfBackend`] (`pmcmc`) is a
//!   pseudo-marginal sampler driven by the bootstrap particle filter in [`smc`],
//!   warm-started from the outputs above.
//!
//! Models implement [`model::Dynamics`] directly in Rust, or are declared in
//! `process.json` / `context.json` / `link.json` (see [`model::config`]).
//! [`model::build_two_city_si`] bundles a two-city SIS model with a diffusing
//! reproduction number.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ekf;
pub mod error;
pub mod integrate;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod optimize;
pub mod parallel;
pub mod rng;
pub mod smc;

pub use error::{Error, Result};
