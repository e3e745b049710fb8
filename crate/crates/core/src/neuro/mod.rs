//! Spike encoding of transactions and the per-validator LIF neuron.

pub mod encode;
pub mod lif;
pub mod pipeline;

pub use encode::{
    embed_transaction, inter_spike_interval, rate_code, rate_code_with_rate, rate_for, temporal_code, weight_for,
    FeatureVector, NeuroError, SlotSeed, SpikeTrain,
};
pub use lif::{lif_step, NeuronState};
pub use pipeline::{compose_current, first_spike_step, fire_steps, trace, write_trace_csv, TracePoint};
