//! Experiment harness around the `seqmc` filtering library: scenario
//! configuration, dataset generation and persistence, algorithm dispatch with
//! seeded replication, and CSV emission of per-step and summary results.

pub mod algo;
pub mod config;
pub mod dataset;
pub mod fingerprint;
pub mod runner;
pub mod tables;
