//! Domain types shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{hex32, Digest, Encoder};
use crate::crypto::{self, KeyPair, KeyRegistry, PublicKey, Signature, VrfOutput};

/// Parent hash of the first block.
pub const GENESIS_HASH: Digest = [0u8; 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u32);

impl ValidatorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotId(pub u64);

impl SlotId {
    pub fn next(self) -> Self {
        SlotId(self.0 + 1)
    }
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slot {}", self.0)
    }
}

/// Dense validator index to public key mapping for one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidatorSet {
    pks: Vec<PublicKey>,
}

impl ValidatorSet {
    pub fn new(pks: Vec<PublicKey>) -> Self {
        Self { pks }
    }

    pub fn from_keys(keys: &[KeyPair]) -> Self {
        Self::new(keys.iter().map(|k| k.pk).collect())
    }

    pub fn len(&self) -> usize {
        self.pks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pks.is_empty()
    }

    pub fn pk(&self, id: ValidatorId) -> Option<&PublicKey> {
        self.pks.get(id.index())
    }

    pub fn ids(&self) -> impl Iterator<Item = ValidatorId> + '_ {
        (0..self.pks.len() as u32).map(ValidatorId)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    #[serde(with = "hex32")]
    pub id: Digest,
    #[serde(with = "hex32")]
    pub sender: PublicKey,
    #[serde(with = "hex32")]
    pub receiver: [u8; 32],
    pub value: u64,
    pub fee: u64,
    pub signature: Signature,
}

impl Transaction {
    /// Builds and signs a transaction from `sender`.
    pub fn new_signed(id: Digest, sender: &KeyPair, receiver: [u8; 32], value: u64, fee: u64) -> Self {
        let mut tx = Transaction {
            id,
            sender: sender.pk,
            receiver,
            value,
            fee,
            signature: Signature([0; 32]),
        };
        tx.signature = crypto::sign(sender.secret(), &tx.signing_bytes());
        tx
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::tagged("posn/tx");
        e.fixed(&self.id)
            .fixed(&self.sender)
            .fixed(&self.receiver)
            .u64(self.value)
            .u64(self.fee);
        e.into_bytes()
    }

    pub fn verify(&self, registry: &KeyRegistry) -> bool {
        registry.verify(&self.sender, &self.signing_bytes(), &self.signature)
    }

    fn encode(&self, e: &mut Encoder) {
        e.fixed(&self.id)
            .fixed(&self.sender)
            .fixed(&self.receiver)
            .u64(self.value)
            .u64(self.fee)
            .fixed(&self.signature.0);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub slot: SlotId,
    pub proposer: ValidatorId,
    #[serde(with = "hex32")]
    pub parent_hash: Digest,
    pub txs: Vec<Transaction>,
    pub claimed_fire_step: u32,
    pub vrf_output: Option<VrfOutput>,
    pub proposer_signature: Signature,
}

impl Block {
    /// Unsigned block; call [`Block::sign`] before broadcasting.
    pub fn unsigned(
        slot: SlotId,
        proposer: ValidatorId,
        parent_hash: Digest,
        txs: Vec<Transaction>,
        claimed_fire_step: u32,
        vrf_output: Option<VrfOutput>,
    ) -> Self {
        Self {
            slot,
            proposer,
            parent_hash,
            txs,
            claimed_fire_step,
            vrf_output,
            proposer_signature: Signature([0; 32]),
        }
    }

    pub fn hash(&self) -> Digest {
        hash_block(self)
    }

    pub fn sign(mut self, kp: &KeyPair) -> Self {
        self.proposer_signature = crypto::sign(kp.secret(), &self.hash());
        self
    }

    pub fn verify_signature(&self, validators: &ValidatorSet, registry: &KeyRegistry) -> bool {
        validators
            .pk(self.proposer)
            .is_some_and(|pk| registry.verify(pk, &self.hash(), &self.proposer_signature))
    }

    /// Empty blocks are legal but flagged in logs.
    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn total_fees(&self) -> u64 {
        self.txs.iter().map(|tx| tx.fee).sum()
    }
}

/// Digest over every block field except the proposer signature.
pub fn hash_block(block: &Block) -> Digest {
    let mut e = Encoder::tagged("posn/block");
    e.u64(block.slot.0)
        .u32(block.proposer.0)
        .fixed(&block.parent_hash)
        .len_prefix(block.txs.len());
    for tx in &block.txs {
        tx.encode(&mut e);
    }
    e.u32(block.claimed_fire_step);
    match &block.vrf_output {
        None => {
            e.u8(0);
        }
        Some(out) => {
            e.u8(1).fixed(&out.value).fixed(&out.proof);
        }
    }
    e.digest()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub slot: SlotId,
    #[serde(with = "hex32")]
    pub block_hash: Digest,
    pub voter: ValidatorId,
    pub signature: Signature,
}

impl Vote {
    pub fn signing_bytes(slot: SlotId, block_hash: &Digest) -> Vec<u8> {
        let mut e = Encoder::tagged("posn/vote");
        e.u64(slot.0).fixed(block_hash);
        e.into_bytes()
    }

    pub fn new_signed(slot: SlotId, block_hash: Digest, voter: ValidatorId, kp: &KeyPair) -> Self {
        let signature = crypto::sign(kp.secret(), &Self::signing_bytes(slot, &block_hash));
        Self {
            slot,
            block_hash,
            voter,
            signature,
        }
    }

    pub fn verify(&self, validators: &ValidatorSet, registry: &KeyRegistry) -> bool {
        validators.pk(self.voter).is_some_and(|pk| {
            registry.verify(
                pk,
                &Self::signing_bytes(self.slot, &self.block_hash),
                &self.signature,
            )
        })
    }
}

/// Deterministic block body selection: highest fee first, id ascending on
/// ties, invalid signatures and repeated ids dropped.
pub fn select_mempool(
    mempool: &[Transaction],
    max_block_txs: usize,
    registry: &KeyRegistry,
) -> Vec<Transaction> {
    select_prevalidated(mempool.iter().filter(|tx| tx.verify(registry)), max_block_txs)
}

/// [`select_mempool`] ordering for transactions whose signatures were
/// already checked on arrival.
pub fn select_prevalidated<'a>(
    mempool: impl IntoIterator<Item = &'a Transaction>,
    max_block_txs: usize,
) -> Vec<Transaction> {
    let mut candidates: Vec<&Transaction> = mempool.into_iter().collect();
    candidates.sort_by(|a, b| b.fee.cmp(&a.fee).then_with(|| a.id.cmp(&b.id)));
    // Copies of one id need not be adjacent; the highest-fee copy is kept.
    let mut seen = std::collections::HashSet::new();
    candidates
        .into_iter()
        .filter(|tx| seen.insert(tx.id))
        .take(max_block_txs)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;

    fn tx(kp: &KeyPair, n: u8, fee: u64) -> Transaction {
        let mut id = [0u8; 32];
        id[0] = n;
        Transaction::new_signed(id, kp, [9; 32], 10, fee)
    }

    fn setup() -> (KeyPair, KeyRegistry) {
        let kp = keygen(0, 100);
        let mut reg = KeyRegistry::new();
        reg.register(&kp);
        (kp, reg)
    }

    fn sample_block(kp: &KeyPair) -> Block {
        Block::unsigned(SlotId(3), ValidatorId(1), [7; 32], vec![tx(kp, 1, 4)], 17, None)
    }

    #[test]
    fn hash_is_deterministic_and_sensitive() {
        let (kp, _) = setup();
        let b = sample_block(&kp);
        assert_eq!(hash_block(&b), hash_block(&b.clone()));
        let mut c = b.clone();
        c.claimed_fire_step += 1;
        assert_ne!(hash_block(&b), hash_block(&c));
        let mut c = b.clone();
        c.parent_hash[0] ^= 1;
        assert_ne!(hash_block(&b), hash_block(&c));
        let mut c = b.clone();
        c.slot = SlotId(4);
        assert_ne!(hash_block(&b), hash_block(&c));
    }

    #[test]
    fn hash_ignores_signature() {
        let (kp, _) = setup();
        let b = sample_block(&kp);
        let signed = b.clone().sign(&kp);
        assert_eq!(hash_block(&b), hash_block(&signed));
    }

    #[test]
    fn hash_survives_json_round_trip() {
        let (kp, _) = setup();
        let b = sample_block(&kp).sign(&kp);
        let text = serde_json::to_string(&b).unwrap();
        let back: Block = serde_json::from_str(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(hash_block(&back), hash_block(&b));
    }

    #[test]
    fn mempool_orders_by_fee_then_id() {
        let (kp, reg) = setup();
        let pool = vec![tx(&kp, 3, 5), tx(&kp, 2, 9), tx(&kp, 1, 9)];
        let picked = select_mempool(&pool, 2, &reg);
        assert_eq!(picked.len(), 2);
        assert_eq!(picked[0].id[0], 1);
        assert_eq!(picked[1].id[0], 2);
        assert!(select_mempool(&[], 4, &reg).is_empty());
    }

    #[test]
    fn mempool_drops_bad_signatures_and_duplicates() {
        let (kp, reg) = setup();
        let mut forged = tx(&kp, 4, 50);
        forged.value += 1;
        let pool = vec![forged, tx(&kp, 5, 1), tx(&kp, 5, 1)];
        let picked = select_mempool(&pool, 10, &reg);
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].id[0], 5);
    }

    #[test]
    fn vote_signature_binds_slot_and_hash() {
        let kp = keygen(0, 0);
        let mut reg = KeyRegistry::new();
        reg.register(&kp);
        let set = ValidatorSet::from_keys(std::slice::from_ref(&kp));
        let v = Vote::new_signed(SlotId(1), [1; 32], ValidatorId(0), &kp);
        assert!(v.verify(&set, &reg));
        let mut moved = v.clone();
        moved.slot = SlotId(2);
        assert!(!moved.verify(&set, &reg));
        let mut stranger = v;
        stranger.voter = ValidatorId(5);
        assert!(!stranger.verify(&set, &reg));
    }
}
