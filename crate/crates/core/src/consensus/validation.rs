use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::election::{earliest, vrf_input, ElectionResult, ReplayCache};
use crate::codec::Digest;
use crate::config::Config;
use crate::crypto::{vrf_eval, KeyPair, KeyRegistry, VrfOutput};
use crate::types::{select_mempool, Block, SlotId, Transaction, ValidatorId, ValidatorSet};

/// What a validator knows when judging a proposal for its current slot.
#[derive(Clone, Copy, Debug)]
pub struct LocalView<'a> {
    pub slot: SlotId,
    pub parent_hash: Digest,
    /// Pending transactions eligible for this slot.
    pub mempool: &'a [Transaction],
    /// Verified-on-use VRF reveals received from tied validators.
    pub reveals: &'a BTreeMap<ValidatorId, VrfOutput>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadSignature,
    BadTxSignature,
    WrongSlot,
    ParentMismatch,
    FireStepOutOfRange,
    SpikeMismatch,
    /// Someone fired earlier, or (`tie_lost`) a tied validator holds a
    /// smaller VRF value.
    NotElected { tie_lost: bool },
    VrfMissing,
    VrfInvalid,
    UnexpectedVrf,
    TxSetMismatch,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::BadSignature => "bad_signature",
            RejectReason::BadTxSignature => "bad_tx_signature",
            RejectReason::WrongSlot => "wrong_slot",
            RejectReason::ParentMismatch => "parent_mismatch",
            RejectReason::FireStepOutOfRange => "fire_step_out_of_range",
            RejectReason::SpikeMismatch => "spike_mismatch",
            RejectReason::NotElected { tie_lost: false } => "not_elected",
            RejectReason::NotElected { tie_lost: true } => "tie_lost",
            RejectReason::VrfMissing => "vrf_missing",
            RejectReason::VrfInvalid => "vrf_invalid",
            RejectReason::UnexpectedVrf => "unexpected_vrf",
            RejectReason::TxSetMismatch => "tx_set_mismatch",
        }
    }

    /// Reasons that prove the proposer lied about its own firing.
    pub fn is_forgery(self) -> bool {
        matches!(
            self,
            RejectReason::SpikeMismatch
                | RejectReason::FireStepOutOfRange
                | RejectReason::NotElected { tie_lost: false }
                | RejectReason::VrfMissing
                | RejectReason::VrfInvalid
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept(ElectionResult),
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept(_))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProposeError {
    #[error("{caller} is not the elected leader {leader}")]
    NotLeader { caller: ValidatorId, leader: ValidatorId },
}

/// Builds and signs the leader's block. The VRF output is attached exactly
/// when the election needed a tie-break.
#[allow(clippy::too_many_arguments)]
pub fn propose(
    leader: ValidatorId,
    keys: &KeyPair,
    slot: SlotId,
    parent_hash: Digest,
    mempool: &[Transaction],
    election: &ElectionResult,
    cfg: &Config,
    registry: &KeyRegistry,
) -> Result<Block, ProposeError> {
    if leader != election.leader {
        return Err(ProposeError::NotLeader {
            caller: leader,
            leader: election.leader,
        });
    }
    let txs = select_mempool(mempool, cfg.max_block_txs, registry);
    let vrf = election
        .vrf_used
        .then(|| vrf_eval(keys.secret(), &vrf_input(slot, &parent_hash)));
    Ok(Block::unsigned(slot, leader, parent_hash, txs, election.fire_step, vrf).sign(keys))
}

/// Replays the proposer's claim against the local view. Checks run in a
/// fixed order and the first failure is reported.
pub fn validate_proposal(
    block: &Block,
    view: &LocalView<'_>,
    cfg: &Config,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
    replay: &mut ReplayCache,
) -> Verdict {
    use RejectReason::*;

    if !block.verify_signature(validators, registry) {
        return Verdict::Reject(BadSignature);
    }
    if !block.txs.iter().all(|tx| tx.verify(registry)) {
        return Verdict::Reject(BadTxSignature);
    }
    if block.slot != view.slot {
        return Verdict::Reject(WrongSlot);
    }
    if block.parent_hash != view.parent_hash {
        return Verdict::Reject(ParentMismatch);
    }
    if block.claimed_fire_step >= cfg.tau_steps {
        return Verdict::Reject(FireStepOutOfRange);
    }
    let steps = replay.fire_steps(&block.parent_hash, block.slot, &block.txs);
    if steps.get(block.proposer.index()).copied().flatten() != Some(block.claimed_fire_step) {
        return Verdict::Reject(SpikeMismatch);
    }
    let Some((min, tie_set)) = earliest(&steps) else {
        return Verdict::Reject(SpikeMismatch);
    };
    if min < block.claimed_fire_step {
        return Verdict::Reject(NotElected { tie_lost: false });
    }
    let vrf_used = tie_set.len() > 1;
    if vrf_used {
        let Some(own) = &block.vrf_output else {
            return Verdict::Reject(VrfMissing);
        };
        let input = vrf_input(block.slot, &block.parent_hash);
        let pk = validators.pk(block.proposer).expect("signature verified");
        if !registry.vrf_verify(pk, &input, own) {
            return Verdict::Reject(VrfInvalid);
        }
        let beaten = tie_set.iter().filter(|&&v| v != block.proposer).any(|&v| {
            view.reveals.get(&v).is_some_and(|r| {
                r.value < own.value && validators.pk(v).is_some_and(|pk| registry.vrf_verify(pk, &input, r))
            })
        });
        if beaten {
            return Verdict::Reject(NotElected { tie_lost: true });
        }
    } else if block.vrf_output.is_some() {
        return Verdict::Reject(UnexpectedVrf);
    }
    if select_mempool(view.mempool, cfg.max_block_txs, registry) != block.txs {
        return Verdict::Reject(TxSetMismatch);
    }
    Verdict::Accept(ElectionResult {
        leader: block.proposer,
        fire_step: min,
        tie_set,
        vrf_used,
    })
}
