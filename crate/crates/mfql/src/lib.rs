//! Experiment driver for the `meanfield` crate.
//!
//! Four operations, each reading the same configuration format:
//! `train` (multi-seed learning runs with averaged CSV reports),
//! `benchmark` (ground-truth control tables), `compare` (distance metrics
//! between the two, in action-grid-step units), and `fixed-point` (the
//! model-known damped iteration on the exact kernel).

pub mod config;
pub mod experiment;
pub mod report;
