use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{hex32, Digest, Encoder};
use crate::config::Config;
use crate::rng::Stream;
use crate::types::{SlotId, Transaction, ValidatorId};

#[derive(Debug, Error, PartialEq)]
pub enum NeuroError {
    #[error("per-step spike probability {0} must be below 1")]
    RateTooHigh(f64),
}

/// Index of the normalized value feature.
pub const VALUE_COMPONENT: usize = 0;
/// Index of the normalized fee feature.
pub const FEE_COMPONENT: usize = 1;

/// Deterministic embedding of a transaction, every component in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub components: Vec<f64>,
}

impl FeatureVector {
    pub fn value_component(&self) -> f64 {
        self.components[VALUE_COMPONENT]
    }

    pub fn fee_component(&self) -> f64 {
        self.components[FEE_COMPONENT]
    }
}

/// Binary event sequence over one slot window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub steps: Vec<bool>,
}

impl SpikeTrain {
    pub fn silent(len: usize) -> Self {
        Self {
            steps: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn spike_count(&self) -> usize {
        self.steps.iter().filter(|&&s| s).count()
    }

    pub fn at(&self, step: usize) -> bool {
        self.steps.get(step).copied().unwrap_or(false)
    }
}

/// Seed shared by every node for one `(parent, slot, tx set)` triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotSeed(#[serde(with = "hex32")] pub Digest);

impl SlotSeed {
    /// `digest(parent_hash || slot || digest(sorted tx ids))`.
    pub fn derive(parent_hash: &Digest, slot: SlotId, txs: &[Transaction]) -> Self {
        let mut ids: Vec<&Digest> = txs.iter().map(|tx| &tx.id).collect();
        ids.sort();
        let mut set = Encoder::tagged("posn/tx-set");
        set.len_prefix(ids.len());
        for id in ids {
            set.fixed(id);
        }
        let mut e = Encoder::tagged("posn/slot-seed");
        e.fixed(parent_hash).u64(slot.0).fixed(&set.digest());
        SlotSeed(e.digest())
    }

    /// Per-validator mix so each neuron sees its own sample of the trains.
    pub fn for_validator(&self, v: ValidatorId) -> SlotSeed {
        let mut e = Encoder::tagged("posn/validator-seed");
        e.fixed(&self.0).u32(v.0);
        SlotSeed(e.digest())
    }
}

fn saturating_ratio(x: u64, c: f64) -> f64 {
    let x = x as f64;
    x / (x + c)
}

pub fn embed_transaction(tx: &Transaction, cfg: &Config) -> FeatureVector {
    let d = cfg.embedding_dim.max(2);
    let mut components = Vec::with_capacity(d);
    components.push(saturating_ratio(tx.value, cfg.c_value));
    components.push(saturating_ratio(tx.fee, cfg.c_fee));
    let body = tx.signing_bytes();
    for i in 2..d {
        let mut e = Encoder::tagged("posn/embed");
        e.bytes(&body).u32(i as u32);
        let h = e.digest();
        let x = u64::from_le_bytes(h[..8].try_into().unwrap());
        components.push((x >> 11) as f64 * (1.0 / (1u64 << 53) as f64));
    }
    FeatureVector { components }
}

/// Rate-coding firing rate in spikes/ms, monotone in the fee.
pub fn rate_for(tx: &Transaction, cfg: &Config) -> f64 {
    let fee = embed_transaction(tx, cfg).fee_component();
    cfg.r_min + (cfg.r_max - cfg.r_min) * fee
}

/// Synaptic weight of a transaction's train; fee raises priority.
pub fn weight_for(tx: &Transaction, cfg: &Config) -> f64 {
    1.0 + embed_transaction(tx, cfg).fee_component()
}

fn rate_stream(seed: &SlotSeed, tx_id: &Digest) -> Stream {
    let mut e = Encoder::tagged("posn/rate-code");
    e.fixed(&seed.0).fixed(tx_id);
    Stream::from_key(e.digest())
}

/// Bernoulli-per-step Poisson train with `P(spike) = rate * dt`, reproducible
/// from `(seed, tx.id)`.
pub fn rate_code_with_rate(
    tx: &Transaction,
    rate: f64,
    seed: &SlotSeed,
    cfg: &Config,
) -> Result<SpikeTrain, NeuroError> {
    let p = rate * cfg.dt;
    if !(0.0..1.0).contains(&p) {
        return Err(NeuroError::RateTooHigh(p));
    }
    let mut stream = rate_stream(seed, &tx.id);
    let steps = (0..cfg.tau_steps).map(|_| stream.unit() < p).collect();
    Ok(SpikeTrain { steps })
}

pub fn rate_code(tx: &Transaction, seed: &SlotSeed, cfg: &Config) -> Result<SpikeTrain, NeuroError> {
    rate_code_with_rate(tx, rate_for(tx, cfg), seed, cfg)
}

/// Inter-spike interval in micro-steps: `ceil(kappa / (value + fee + eps))`,
/// at least 1.
pub fn inter_spike_interval(tx: &Transaction, cfg: &Config) -> u64 {
    let drive = tx.value as f64 + tx.fee as f64 + cfg.epsilon_isi;
    let isi = (cfg.kappa / drive).ceil();
    if isi >= u64::MAX as f64 {
        u64::MAX
    } else {
        (isi as u64).max(1)
    }
}

/// Periodic train, first spike at step `ISI - 1`.
pub fn temporal_code(tx: &Transaction, cfg: &Config) -> SpikeTrain {
    let isi = inter_spike_interval(tx, cfg);
    let steps = (0..u64::from(cfg.tau_steps))
        .map(|k| (k + 1) % isi == 0)
        .collect();
    SpikeTrain { steps }
}
