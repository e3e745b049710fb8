use std::io::{self, Write};

use serde::Serialize;

use super::encode::{rate_code, temporal_code, weight_for, SlotSeed, SpikeTrain};
use super::lif::{lif_step, NeuronState};
use crate::config::{Config, EncodingMode};
use crate::types::{Transaction, ValidatorId};

/// `I(step) = sum of w * S(step)` over the weighted trains, in order.
pub fn compose_current(trains: &[(SpikeTrain, f64)], step: usize) -> f64 {
    trains
        .iter()
        .map(|(train, w)| if train.at(step) { *w } else { 0.0 })
        .sum()
}

/// Encodes every transaction for one validator's neuron.
pub fn encode_inputs(
    validator: ValidatorId,
    txs: &[Transaction],
    seed: &SlotSeed,
    cfg: &Config,
) -> Vec<(SpikeTrain, f64)> {
    let vseed = seed.for_validator(validator);
    let mut trains = Vec::with_capacity(txs.len());
    for tx in txs {
        let w = weight_for(tx, cfg);
        if matches!(cfg.encoding, EncodingMode::Rate | EncodingMode::Both) {
            // A validated config keeps every rate below 1/dt.
            let train = rate_code(tx, &vseed, cfg).expect("config admits rate above 1/dt");
            trains.push((train, w));
        }
        if matches!(cfg.encoding, EncodingMode::Temporal | EncodingMode::Both) {
            trains.push((temporal_code(tx, cfg), w));
        }
    }
    trains
}

/// Per-step input current for one validator over the whole window.
pub fn current_profile(
    validator: ValidatorId,
    txs: &[Transaction],
    seed: &SlotSeed,
    cfg: &Config,
) -> Vec<f64> {
    let trains = encode_inputs(validator, txs, seed, cfg);
    (0..cfg.tau_steps as usize)
        .map(|k| compose_current(&trains, k))
        .collect()
}

/// Earliest micro-step at which the validator's neuron fires in this slot,
/// starting from rest. `None` when it stays below threshold all window.
pub fn first_spike_step(
    validator: ValidatorId,
    txs: &[Transaction],
    seed: &SlotSeed,
    cfg: &Config,
) -> Option<u32> {
    if txs.is_empty() {
        return None;
    }
    let mut state = NeuronState::at_rest(cfg);
    for (k, current) in current_profile(validator, txs, seed, cfg).into_iter().enumerate() {
        let (next, spiked) = lif_step(state, current, cfg.dt);
        if spiked {
            return Some(k as u32);
        }
        state = next;
    }
    None
}

/// First-spike steps of every validator, indexed by validator.
pub fn fire_steps(n: usize, txs: &[Transaction], seed: &SlotSeed, cfg: &Config) -> Vec<Option<u32>> {
    (0..n as u32)
        .map(|v| first_spike_step(ValidatorId(v), txs, seed, cfg))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub validator: u32,
    pub step: u32,
    pub potential: f64,
    pub spiked: bool,
}

/// Full-window membrane trace, continuing past spikes.
pub fn trace(validator: ValidatorId, txs: &[Transaction], seed: &SlotSeed, cfg: &Config) -> Vec<TracePoint> {
    let mut state = NeuronState::at_rest(cfg);
    current_profile(validator, txs, seed, cfg)
        .into_iter()
        .enumerate()
        .map(|(k, current)| {
            let (next, spiked) = lif_step(state, current, cfg.dt);
            state = next;
            TracePoint {
                validator: validator.0,
                step: k as u32,
                potential: next.v,
                spiked,
            }
        })
        .collect()
}

/// Debug dump with header `validator,step,potential,spiked`.
pub fn write_trace_csv<W: Write>(mut out: W, points: &[TracePoint]) -> io::Result<()> {
    writeln!(out, "validator,step,potential,spiked")?;
    for p in points {
        writeln!(out, "{},{},{:.12},{}", p.validator, p.step, p.potential, u8::from(p.spiked))?;
    }
    Ok(())
}
