use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::BTreeMap;

use super::election::ReplayCache;
use super::validation::{validate_proposal, LocalView, RejectReason, Verdict};
use crate::chain::{ChainState, PenaltyRecord};
use crate::config::{Config, PenaltyMode};
use crate::crypto::KeyRegistry;
use crate::types::{Block, SlotId, ValidatorId, ValidatorSet, Vote};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    LeaderReward,
    VoteReward,
    Penalty,
    /// Share of a penalty paid to another validator.
    Redistribution,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub slot: SlotId,
    pub recipient: ValidatorId,
    pub amount: i64,
    pub kind: RewardKind,
}

/// Leader gets the base reward plus all fees; every quorum voter gets the
/// validation reward.
pub fn distribute_rewards(block: &Block, quorum: &[Vote], cfg: &Config) -> Vec<RewardEvent> {
    let mut events = Vec::with_capacity(quorum.len() + 1);
    events.push(RewardEvent {
        slot: block.slot,
        recipient: block.proposer,
        amount: to_amount(cfg.r_base.saturating_add(block.total_fees())),
        kind: RewardKind::LeaderReward,
    });
    events.extend(quorum.iter().map(|v| RewardEvent {
        slot: block.slot,
        recipient: v.voter,
        amount: to_amount(cfg.r_vote),
        kind: RewardKind::VoteReward,
    }));
    events
}

fn to_amount(v: u64) -> i64 {
    i64::try_from(v).unwrap_or(i64::MAX)
}

/// Misbehavior proof carried by honest validators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evidence {
    /// Two signed proposals for one slot from one proposer.
    Equivocation { first: Block, second: Block },
    /// A signed proposal whose leadership claim is contradicted by
    /// replaying its own transactions.
    ForgedSpike { block: Block },
}

impl Evidence {
    pub fn offender(&self) -> ValidatorId {
        match self {
            Evidence::Equivocation { first, .. } => first.proposer,
            Evidence::ForgedSpike { block, .. } => block.proposer,
        }
    }

    pub fn slot(&self) -> SlotId {
        match self {
            Evidence::Equivocation { first, .. } => first.slot,
            Evidence::ForgedSpike { block, .. } => block.slot,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            Evidence::Equivocation { .. } => "equivocation",
            Evidence::ForgedSpike { .. } => "forged_spike",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PenaltyError {
    #[error("evidence does not verify: {0}")]
    InvalidEvidence(&'static str),
}

/// True when replay contradicts the block's leadership claim: wrong firing
/// step, an earlier spike elsewhere, or a bad or missing tie-break VRF.
/// Losing a tie to an unseen reveal is not a contradiction.
pub fn replay_contradicts(
    block: &Block,
    cfg: &Config,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
    replay: &mut ReplayCache,
) -> bool {
    replay_forgery(block, cfg, validators, registry, replay).is_some()
}

/// The forgery replay finds in `block` judged against its own slot, parent
/// and transactions, if any.
pub fn replay_forgery(
    block: &Block,
    cfg: &Config,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
    replay: &mut ReplayCache,
) -> Option<RejectReason> {
    let reveals = BTreeMap::new();
    let view = LocalView {
        slot: block.slot,
        parent_hash: block.parent_hash,
        mempool: &block.txs,
        reveals: &reveals,
    };
    match validate_proposal(block, &view, cfg, validators, registry, replay) {
        Verdict::Reject(reason) if reason.is_forgery() => Some(reason),
        _ => None,
    }
}

/// Verifies `evidence` and debits the offender. Burned by default; in
/// redistribution mode the amount is split among the other validators.
pub fn apply_penalty(
    chain: &mut ChainState,
    evidence: &Evidence,
    cfg: &Config,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
    replay: &mut ReplayCache,
) -> Result<Vec<RewardEvent>, PenaltyError> {
    let amount = match evidence {
        Evidence::Equivocation { first, second } => {
            if first.proposer != second.proposer || first.slot != second.slot {
                return Err(PenaltyError::InvalidEvidence("blocks are not from one proposer and slot"));
            }
            if first.hash() == second.hash() {
                return Err(PenaltyError::InvalidEvidence("blocks are identical"));
            }
            if !first.verify_signature(validators, registry) || !second.verify_signature(validators, registry) {
                return Err(PenaltyError::InvalidEvidence("bad proposer signature"));
            }
            cfg.penalty_equivocation
        }
        Evidence::ForgedSpike { block } => {
            if !block.verify_signature(validators, registry) {
                return Err(PenaltyError::InvalidEvidence("bad proposer signature"));
            }
            if !replay_contradicts(block, cfg, validators, registry, replay) {
                return Err(PenaltyError::InvalidEvidence("replay agrees with the claim"));
            }
            cfg.penalty_forged_spike
        }
    };
    let offender = evidence.offender();
    let slot = evidence.slot();
    let mut events = vec![RewardEvent {
        slot,
        recipient: offender,
        amount: -to_amount(amount),
        kind: RewardKind::Penalty,
    }];
    if cfg.penalty_mode == PenaltyMode::Redistribute && validators.len() > 1 {
        let share = amount / (validators.len() as u64 - 1);
        if share > 0 {
            events.extend(validators.ids().filter(|&v| v != offender).map(|v| RewardEvent {
                slot,
                recipient: v,
                amount: to_amount(share),
                kind: RewardKind::Redistribution,
            }));
        }
    }
    for ev in &events {
        chain.record(ev.clone());
    }
    chain.penalties_log.push(PenaltyRecord {
        offender,
        slot,
        amount,
        reason: evidence.reason().to_string(),
    });
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair};
    use crate::consensus::election::elect_leader;
    use crate::consensus::validation::propose;
    use crate::types::{Transaction, GENESIS_HASH};

    fn world(n: u64) -> (Vec<KeyPair>, ValidatorSet, KeyRegistry) {
        let keys: Vec<_> = (0..n).map(|i| keygen(3, i)).collect();
        let mut reg = KeyRegistry::new();
        keys.iter().for_each(|k| reg.register(k));
        (keys.clone(), ValidatorSet::from_keys(&keys), reg)
    }

    fn fee_tx(kp: &KeyPair, i: u8, fee: u64) -> Transaction {
        let mut id = [0u8; 32];
        id[0] = i;
        Transaction::new_signed(id, kp, [0; 32], 1, fee)
    }

    #[test]
    fn leader_and_voter_arithmetic() {
        let (keys, _, _) = world(4);
        let cfg = Config {
            r_base: 100,
            r_vote: 10,
            ..Config::default()
        };
        let txs = vec![fee_tx(&keys[0], 1, 20), fee_tx(&keys[0], 2, 17)];
        let b = Block::unsigned(SlotId(0), ValidatorId(2), GENESIS_HASH, txs, 0, None);
        let q: Vec<_> = (0..3)
            .map(|i| Vote::new_signed(b.slot, b.hash(), ValidatorId(i), &keys[i as usize]))
            .collect();
        let ev = distribute_rewards(&b, &q, &cfg);
        assert_eq!(ev[0].amount, 137);
        assert_eq!(ev[0].recipient, ValidatorId(2));
        assert_eq!(ev.iter().map(|e| e.amount).sum::<i64>(), 167);
        assert!(ev[1..].iter().all(|e| e.amount == 10 && e.kind == RewardKind::VoteReward));

        let empty = Block::unsigned(SlotId(1), ValidatorId(1), GENESIS_HASH, vec![], 0, None);
        assert_eq!(distribute_rewards(&empty, &[], &cfg)[0].amount, 100);
    }

    #[test]
    fn equivocation_penalty_and_bad_evidence() {
        let (keys, set, reg) = world(4);
        let cfg = Config::default();
        let mut replay = ReplayCache::new(&cfg);
        let a = Block::unsigned(SlotId(4), ValidatorId(1), GENESIS_HASH, vec![], 3, None).sign(&keys[1]);
        let b = Block::unsigned(SlotId(4), ValidatorId(1), GENESIS_HASH, vec![], 5, None).sign(&keys[1]);
        let mut chain = ChainState::new();
        let ev = Evidence::Equivocation {
            first: a.clone(),
            second: b,
        };
        let out = apply_penalty(&mut chain, &ev, &cfg, &set, &reg, &mut replay).unwrap();
        assert_eq!(out[0].amount, -(cfg.penalty_equivocation as i64));
        assert_eq!(chain.balance(ValidatorId(1)), -(cfg.penalty_equivocation as i64));
        assert!(chain.is_conserved());

        let mut forged = a.clone();
        forged.claimed_fire_step = 9;
        let before = chain.clone();
        let bad = Evidence::Equivocation { first: a, second: forged };
        assert!(matches!(
            apply_penalty(&mut chain, &bad, &cfg, &set, &reg, &mut replay),
            Err(PenaltyError::InvalidEvidence(_))
        ));
        assert_eq!(chain, before);
    }

    #[test]
    fn redistribution_conserves() {
        let (keys, set, reg) = world(4);
        let cfg = Config {
            penalty_mode: PenaltyMode::Redistribute,
            penalty_equivocation: 301,
            ..Config::default()
        };
        let mut replay = ReplayCache::new(&cfg);
        let a = Block::unsigned(SlotId(0), ValidatorId(0), GENESIS_HASH, vec![], 1, None).sign(&keys[0]);
        let b = Block::unsigned(SlotId(0), ValidatorId(0), GENESIS_HASH, vec![], 2, None).sign(&keys[0]);
        let mut chain = ChainState::new();
        apply_penalty(&mut chain, &Evidence::Equivocation { first: a, second: b }, &cfg, &set, &reg, &mut replay)
            .unwrap();
        assert_eq!(chain.balance(ValidatorId(1)), 100);
        assert_eq!(chain.burned(), 1);
        assert!(chain.is_conserved());
    }

    #[test]
    fn forged_spike_requires_replay_mismatch() {
        let (keys, set, reg) = world(4);
        let cfg = Config::default();
        let mut replay = ReplayCache::new(&cfg);
        let txs: Vec<_> = (0..30).map(|i| fee_tx(&keys[0], i, 500)).collect();
        let txs = crate::types::select_mempool(&txs, cfg.max_block_txs, &reg);
        let steps = replay.fire_steps(&GENESIS_HASH, SlotId(0), &txs);
        let input = crate::consensus::election::vrf_input(SlotId(0), &GENESIS_HASH);
        let reveals: BTreeMap<_, _> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (ValidatorId(i as u32), crate::crypto::vrf_eval(k.secret(), &input)))
            .collect();
        let e = elect_leader(&steps, SlotId(0), &GENESIS_HASH, &reveals, &set, &reg).expect("30 txs fire");
        let honest = e.leader;
        let min = e.fire_step;
        let truthful = propose(honest, &keys[honest.index()], SlotId(0), GENESIS_HASH, &txs, &e, &cfg, &reg).unwrap();
        let mut chain = ChainState::new();
        assert!(apply_penalty(
            &mut chain,
            &Evidence::ForgedSpike { block: truthful },
            &cfg,
            &set,
            &reg,
            &mut replay
        )
        .is_err());

        let claim = if min == 0 { 1 } else { min - 1 };
        let lie = Block::unsigned(SlotId(0), honest, GENESIS_HASH, txs, claim, None).sign(&keys[honest.index()]);
        let out = apply_penalty(&mut chain, &Evidence::ForgedSpike { block: lie }, &cfg, &set, &reg, &mut replay).unwrap();
        assert_eq!(out[0].kind, RewardKind::Penalty);
        assert_eq!(chain.penalties_log.len(), 1);
        assert_eq!(chain.penalties_log[0].reason, "forged_spike");
    }
}
