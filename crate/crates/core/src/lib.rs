//! Deterministic simulator and protocol library for spiking-neuron leader
//! election with Byzantine quorum finality.

pub mod baselines;
pub mod chain;
pub mod codec;
pub mod config;
pub mod consensus;
pub mod crypto;
pub mod metrics;
pub mod netsim;
pub mod neuro;
pub mod rng;
pub mod types;
