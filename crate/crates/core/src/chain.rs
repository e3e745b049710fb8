//! Finalized chain and reward ledger.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Digest;
use crate::config::Config;
use crate::consensus::rewards::{distribute_rewards, RewardEvent, RewardKind};
use crate::consensus::votes::{dedup_votes, quorum_threshold};
use crate::crypto::KeyRegistry;
use crate::types::{Block, SlotId, ValidatorId, ValidatorSet, Vote, GENESIS_HASH};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("quorum too small: {have} valid votes, need {need}")]
    QuorumTooSmall { have: usize, need: usize },
    #[error("parent hash does not match the chain tip")]
    ParentMismatch,
    #[error("block slot {block} does not follow tip slot {tip}")]
    SlotNotIncreasing { block: u64, tip: u64 },
    #[error("vote from {0} fails signature verification")]
    InvalidVoteSignature(ValidatorId),
    #[error("vote from {0} is for a different block or slot")]
    VoteForOtherBlock(ValidatorId),
    #[error("proposer signature does not verify")]
    BadProposerSignature,
    #[error("transaction already finalized")]
    DuplicateTransaction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyRecord {
    pub offender: ValidatorId,
    pub slot: SlotId,
    pub amount: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainState {
    pub finalized: Vec<Block>,
    pub balances: BTreeMap<ValidatorId, i64>,
    pub penalties_log: Vec<PenaltyRecord>,
    pub events: Vec<RewardEvent>,
    minted: u64,
    burned: u64,
    tip_hash: Digest,
    tx_ids: HashSet<Digest>,
}

impl ChainState {
    pub fn new() -> Self {
        Self {
            tip_hash: GENESIS_HASH,
            ..Self::default()
        }
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip_hash
    }

    pub fn tip_slot(&self) -> Option<SlotId> {
        self.finalized.last().map(|b| b.slot)
    }

    pub fn height(&self) -> usize {
        self.finalized.len()
    }

    pub fn minted(&self) -> u64 {
        self.minted
    }

    pub fn burned(&self) -> u64 {
        self.burned
    }

    pub fn contains_tx(&self, id: &Digest) -> bool {
        self.tx_ids.contains(id)
    }

    pub fn balance(&self, v: ValidatorId) -> i64 {
        self.balances.get(&v).copied().unwrap_or(0)
    }

    /// Checks every precondition and appends `block`, crediting rewards.
    /// On error the chain is left untouched.
    pub fn append(
        &mut self,
        block: Block,
        quorum: &[Vote],
        validators: &ValidatorSet,
        registry: &KeyRegistry,
        cfg: &Config,
    ) -> Result<Vec<RewardEvent>, ChainError> {
        if block.parent_hash != self.tip_hash {
            return Err(ChainError::ParentMismatch);
        }
        if let Some(tip) = self.tip_slot() {
            if block.slot <= tip {
                return Err(ChainError::SlotNotIncreasing {
                    block: block.slot.0,
                    tip: tip.0,
                });
            }
        }
        if !block.verify_signature(validators, registry) {
            return Err(ChainError::BadProposerSignature);
        }
        let hash = block.hash();
        for vote in quorum {
            if !vote.verify(validators, registry) {
                return Err(ChainError::InvalidVoteSignature(vote.voter));
            }
            if vote.block_hash != hash || vote.slot != block.slot {
                return Err(ChainError::VoteForOtherBlock(vote.voter));
            }
        }
        let quorum = dedup_votes(quorum.iter().cloned());
        let need = quorum_threshold(validators.len());
        if quorum.len() < need {
            return Err(ChainError::QuorumTooSmall {
                have: quorum.len(),
                need,
            });
        }
        let mut seen = HashSet::new();
        if block
            .txs
            .iter()
            .any(|tx| self.tx_ids.contains(&tx.id) || !seen.insert(tx.id))
        {
            return Err(ChainError::DuplicateTransaction);
        }

        let events = distribute_rewards(&block, &quorum, cfg);
        for ev in &events {
            self.record(ev.clone());
        }
        self.tx_ids.extend(block.txs.iter().map(|tx| tx.id));
        self.tip_hash = hash;
        self.finalized.push(block);
        Ok(events)
    }

    /// Applies a ledger event. Penalties may drive a balance negative.
    pub fn record(&mut self, ev: RewardEvent) {
        *self.balances.entry(ev.recipient).or_insert(0) += ev.amount;
        match ev.kind {
            RewardKind::LeaderReward | RewardKind::VoteReward => self.minted += ev.amount as u64,
            RewardKind::Penalty => self.burned += ev.amount.unsigned_abs(),
            RewardKind::Redistribution => self.burned -= ev.amount as u64,
        }
        self.events.push(ev);
    }

    /// Sum of balances plus burned amounts equals the minted total.
    pub fn is_conserved(&self) -> bool {
        let held: i128 = self.balances.values().map(|&b| i128::from(b)).sum();
        held + i128::from(self.burned) == i128::from(self.minted)
    }

    /// Full rescan of slot ordering and hash links.
    pub fn verify_integrity(&self) -> bool {
        let mut parent = GENESIS_HASH;
        let mut last: Option<SlotId> = None;
        for b in &self.finalized {
            if b.parent_hash != parent || last.is_some_and(|s| b.slot <= s) {
                return false;
            }
            parent = b.hash();
            last = Some(b.slot);
        }
        parent == self.tip_hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair};

    struct World {
        keys: Vec<KeyPair>,
        set: ValidatorSet,
        reg: KeyRegistry,
        cfg: Config,
    }

    fn world(n: usize) -> World {
        let keys: Vec<_> = (0..n as u64).map(|i| keygen(1, i)).collect();
        let mut reg = KeyRegistry::new();
        keys.iter().for_each(|k| reg.register(k));
        World {
            set: ValidatorSet::from_keys(&keys),
            keys,
            reg,
            cfg: Config::with_validators(n),
        }
    }

    fn block(w: &World, slot: u64, parent: Digest) -> Block {
        Block::unsigned(SlotId(slot), ValidatorId(0), parent, vec![], 3, None).sign(&w.keys[0])
    }

    fn votes(w: &World, b: &Block, voters: &[u32]) -> Vec<Vote> {
        voters
            .iter()
            .map(|&v| Vote::new_signed(b.slot, b.hash(), ValidatorId(v), &w.keys[v as usize]))
            .collect()
    }

    #[test]
    fn appends_with_three_of_four() {
        let w = world(4);
        let mut chain = ChainState::new();
        let b = block(&w, 0, GENESIS_HASH);
        let q = votes(&w, &b, &[0, 1, 2]);
        chain.append(b.clone(), &q, &w.set, &w.reg, &w.cfg).unwrap();
        assert_eq!(chain.height(), 1);
        assert_eq!(chain.tip_hash(), b.hash());
        assert!(chain.verify_integrity());
        assert!(chain.is_conserved());
    }

    #[test]
    fn two_of_four_is_too_small() {
        let w = world(4);
        let mut chain = ChainState::new();
        let b = block(&w, 0, GENESIS_HASH);
        let q = votes(&w, &b, &[0, 1]);
        let err = chain.append(b, &q, &w.set, &w.reg, &w.cfg).unwrap_err();
        assert_eq!(err, ChainError::QuorumTooSmall { have: 2, need: 3 });
        assert_eq!(chain, ChainState::new());
    }

    #[test]
    fn duplicate_voters_do_not_count_twice() {
        let w = world(4);
        let mut chain = ChainState::new();
        let b = block(&w, 0, GENESIS_HASH);
        let q = votes(&w, &b, &[0, 1, 1]);
        assert!(matches!(
            chain.append(b, &q, &w.set, &w.reg, &w.cfg),
            Err(ChainError::QuorumTooSmall { have: 2, .. })
        ));
    }

    #[test]
    fn stale_parent_is_rejected() {
        let w = world(4);
        let mut chain = ChainState::new();
        let b0 = block(&w, 0, GENESIS_HASH);
        chain
            .append(b0.clone(), &votes(&w, &b0, &[0, 1, 2]), &w.set, &w.reg, &w.cfg)
            .unwrap();
        let stale = block(&w, 1, GENESIS_HASH);
        let q = votes(&w, &stale, &[0, 1, 2]);
        let before = chain.clone();
        assert_eq!(
            chain.append(stale, &q, &w.set, &w.reg, &w.cfg),
            Err(ChainError::ParentMismatch)
        );
        assert_eq!(chain, before);
    }

    #[test]
    fn forged_vote_is_rejected() {
        let w = world(4);
        let mut chain = ChainState::new();
        let b = block(&w, 0, GENESIS_HASH);
        let mut q = votes(&w, &b, &[0, 1, 2]);
        q[2].signature.0[0] ^= 1;
        assert_eq!(
            chain.append(b, &q, &w.set, &w.reg, &w.cfg),
            Err(ChainError::InvalidVoteSignature(ValidatorId(2)))
        );
    }

    #[test]
    fn slot_must_increase() {
        let w = world(4);
        let mut chain = ChainState::new();
        let b0 = block(&w, 5, GENESIS_HASH);
        chain
            .append(b0.clone(), &votes(&w, &b0, &[0, 1, 2]), &w.set, &w.reg, &w.cfg)
            .unwrap();
        let b1 = block(&w, 5, b0.hash());
        let q = votes(&w, &b1, &[0, 1, 2]);
        assert!(matches!(
            chain.append(b1, &q, &w.set, &w.reg, &w.cfg),
            Err(ChainError::SlotNotIncreasing { .. })
        ));
    }
}
