//! Bayesian filtering in high-dimensional state-space models.
//!
//! This crate implements two families of sequential inference algorithms over
//! hidden Markov models:
//!
//! * **SMC baselines** — sequential importance resampling (SIR), its blocked
//!   variant, and Resample-Move ([`smc`]).
//! * **Sequential MCMC** — a per-time-step Markov chain over (ancestor,
//!   current state) pairs targeting the filtering posterior with the previous
//!   marginal replaced by an empirical sample bank ([`smcmc`]), driven by
//!   independent, composite, Langevin or Hamiltonian transition kernels
//!   ([`kernels`]).
//!
//! Two concrete sensor-network models are provided: a linear-Gaussian spatial
//! field with an exact Kalman oracle ([`models::gaussian`], [`kalman`]) and a
//! generalized-hyperbolic skewed-t field observed through Poisson counts
//! ([`models::gh`], [`models::poisson`]).
//!
//! All sampling takes a caller-owned RNG; density and gradient evaluations are
//! pure, so chains and Monte-Carlo replications can run concurrently.

pub mod diagnostics;
pub mod error;
pub mod hmm;
pub mod kalman;
pub mod kernels;
pub mod math;
pub mod metric;
pub mod models;
pub mod rng;
pub mod smc;
pub mod smcmc;

pub use error::{Error, Result};
pub use hmm::{Model, Observation, StateVector};
pub use metric::{MetricBundle, MetricDerivatives};
pub use smc::ParticleSet;
pub use smcmc::{ChainSample, SampleBank};
