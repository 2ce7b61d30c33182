//! Telemetry-trained regressors used as block nonce generators.
//!
//! The crate is split along the pipeline:
//!
//! - [`dataset`]: synthetic QoS telemetry (delay, jitter, loss, throughput), CSV I/O and splits.
//! - [`regressors`]: five tree/neighbour regressors written from scratch, plus metrics.
//! - [`randomness`]: uniqueness rate and normalized Shannon entropy of prediction streams.
//! - [`nonce`]: mapping a prediction over live network features to a 64-bit nonce.
//! - [`blockchain`]: signed energy-trading transactions in a SHA-256 hash chain.
//! - [`network`]: a deterministic discrete-event simulation of master/slave SDN
//!   controllers mining and voting on blocks under failures and partitions.

pub mod blockchain;
pub mod dataset;
pub mod network;
pub mod nonce;
pub mod randomness;
pub mod regressors;
pub mod rng;

pub use dataset::{Dataset, GeneratorParams, QosSample};
pub use regressors::{FittedModel, ModelKind, RegressorSpec};
