use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::consensus::{MessageKind, Protocol};
use crate::netsim::{FaultPlan, LoadProfile};
use crate::types::{SlotId, ValidatorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOutcome {
    Finalized,
    Skipped,
}

/// Network-wide outcome of one slot: finalized if any honest validator
/// appended a block for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: SlotId,
    pub start_ms: u64,
    pub outcome: SlotOutcome,
    pub leader: Option<ValidatorId>,
    pub fire_step: Option<u32>,
    pub tie_size: usize,
    pub vrf_used: bool,
    pub quorum_size: usize,
    pub tx_count: usize,
    pub block_hash: Option<String>,
    /// Earliest honest finalization time.
    pub finalized_ms: Option<u64>,
    pub honest_finalizers: usize,
    pub rewards_minted: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub id: String,
    pub submit_ms: u64,
    pub finalize_ms: Option<u64>,
    pub finalize_slot: Option<SlotId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyObservation {
    pub observer: ValidatorId,
    pub offender: ValidatorId,
    pub slot: SlotId,
    pub reason: String,
    pub amount: u64,
}

/// A ForgeSpike proposal and how honest validators treated it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgedRecord {
    pub slot: SlotId,
    pub proposer: ValidatorId,
    pub block_hash: String,
    /// Whether replay with every validator's VRF refutes the claim.
    pub contradicted: bool,
    pub honest_rejecters: Vec<ValidatorId>,
    pub honest_penalizers: Vec<ValidatorId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub node: ValidatorId,
    pub honest: bool,
    pub height: usize,
    pub minted: u64,
    pub burned: u64,
    pub balance_sum: i64,
    pub conserved: bool,
    pub integrity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub protocol: Protocol,
    pub seed: u64,
    pub config: Config,
    pub faults: FaultPlan,
    pub load: LoadProfile,
    pub slot_len_ms: u64,
    pub duration_ms: u64,
    pub slots: Vec<SlotRecord>,
    pub txs: Vec<TxRecord>,
    pub messages: BTreeMap<MessageKind, u64>,
    pub rejections: BTreeMap<String, u64>,
    pub malformed: u64,
    pub penalties: Vec<PenaltyObservation>,
    pub forged: Vec<ForgedRecord>,
    pub ledgers: Vec<LedgerTotals>,
    pub violations: Vec<String>,
}

impl RunLog {
    pub fn finalized_slots(&self) -> impl Iterator<Item = &SlotRecord> {
        self.slots.iter().filter(|s| s.outcome == SlotOutcome::Finalized)
    }

    pub fn finalized_txs(&self) -> impl Iterator<Item = &TxRecord> {
        self.txs.iter().filter(|t| t.finalize_ms.is_some())
    }

    pub fn leader_counts(&self) -> BTreeMap<ValidatorId, u64> {
        let mut counts = BTreeMap::new();
        for s in self.finalized_slots() {
            if let Some(l) = s.leader {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}
