//! Deterministic federated-learning simulator for label-skewed clients with
//! incomplete classes.
//!
//! The crate provides a small dense network with hand-derived gradients
//! ([`nn`]), the training objectives including restricted softmax,
//! distillation and MMD ([`losses`]), synthetic data and client partitioners
//! ([`data`]), the parameter-server round loop with FedAvg, FedRS, FedPHP and
//! MAP client procedures ([`fl`]), evaluation and proxy diagnostics
//! ([`metrics`]), and a config-driven experiment runner ([`experiment`]).
//!
//! Every run is a pure function of its configuration and seed.

pub mod data;
mod error;
pub mod experiment;
pub mod fl;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
