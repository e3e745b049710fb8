use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::{Digest, Encoder};
use crate::config::Config;
use crate::crypto::{KeyRegistry, VrfOutput};
use crate::neuro::{fire_steps, SlotSeed};
use crate::types::{SlotId, Transaction, ValidatorId, ValidatorSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionResult {
    pub leader: ValidatorId,
    pub fire_step: u32,
    pub tie_set: Vec<ValidatorId>,
    pub vrf_used: bool,
}

/// VRF input shared by tie-breaking and the PoR baseline.
pub fn vrf_input(slot: SlotId, parent_hash: &Digest) -> Vec<u8> {
    let mut e = Encoder::tagged("posn/vrf-input");
    e.u64(slot.0).fixed(parent_hash);
    e.into_bytes()
}

/// Earliest firing step and the validators that reached it.
pub fn earliest(fire_steps: &[Option<u32>]) -> Option<(u32, Vec<ValidatorId>)> {
    let min = fire_steps.iter().flatten().min().copied()?;
    let tie = fire_steps
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == Some(min))
        .map(|(i, _)| ValidatorId(i as u32))
        .collect();
    Some((min, tie))
}

/// Verified reveal with the smallest VRF value among `candidates`.
pub fn smallest_reveal(
    candidates: impl IntoIterator<Item = ValidatorId>,
    slot: SlotId,
    parent_hash: &Digest,
    reveals: &BTreeMap<ValidatorId, VrfOutput>,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
) -> Option<ValidatorId> {
    let input = vrf_input(slot, parent_hash);
    candidates
        .into_iter()
        .filter_map(|v| {
            let out = reveals.get(&v)?;
            let pk = validators.pk(v)?;
            registry.vrf_verify(pk, &input, out).then_some((out.value, v))
        })
        .min()
        .map(|(_, v)| v)
}

/// Earliest spike wins; simultaneous spikes go to the smallest verified VRF
/// value over `(slot || parent_hash)`. Tied validators without a verified
/// reveal cannot win.
pub fn elect_leader(
    fire_steps: &[Option<u32>],
    slot: SlotId,
    parent_hash: &Digest,
    reveals: &BTreeMap<ValidatorId, VrfOutput>,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
) -> Option<ElectionResult> {
    let (fire_step, tie_set) = earliest(fire_steps)?;
    if let [only] = tie_set[..] {
        return Some(ElectionResult {
            leader: only,
            fire_step,
            tie_set,
            vrf_used: false,
        });
    }
    let leader = smallest_reveal(tie_set.iter().copied(), slot, parent_hash, reveals, validators, registry)?;
    Some(ElectionResult {
        leader,
        fire_step,
        tie_set,
        vrf_used: true,
    })
}

/// Memo of per-slot firing steps. First-spike computation is a pure function
/// of the seed and tx set, so nodes in one process may share it.
#[derive(Debug)]
pub struct ReplayCache {
    cfg: Config,
    n: usize,
    memo: HashMap<SlotSeed, Arc<Vec<Option<u32>>>>,
}

impl ReplayCache {
    pub fn new(cfg: &Config) -> Self {
        Self {
            cfg: cfg.clone(),
            n: cfg.n_validators,
            memo: HashMap::new(),
        }
    }

    pub fn fire_steps(&mut self, parent_hash: &Digest, slot: SlotId, txs: &[Transaction]) -> Arc<Vec<Option<u32>>> {
        let seed = SlotSeed::derive(parent_hash, slot, txs);
        let (n, cfg) = (self.n, &self.cfg);
        self.memo
            .entry(seed)
            .or_insert_with(|| Arc::new(fire_steps(n, txs, &seed, cfg)))
            .clone()
    }

    /// Drops memo entries; they are recomputed on demand.
    pub fn clear(&mut self) {
        self.memo.clear();
    }
}
