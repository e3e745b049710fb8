//! Straight-line reference implementations shared by the integration
//! tests. Nothing here calls the library's encoders; byte layouts are
//! rebuilt by hand from raw SHA-256 and ChaCha8.

#![allow(dead_code)]

use posn::config::{Config, EncodingMode};
use posn::crypto::{keygen, KeyPair};
use posn::types::Transaction;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn tag(h: &mut Sha256, t: &str) {
    h.update((t.len() as u32).to_le_bytes());
    h.update(t.as_bytes());
}

pub fn ref_slot_seed(parent: &[u8; 32], slot: u64, ids: &[[u8; 32]]) -> [u8; 32] {
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut set = Sha256::new();
    tag(&mut set, "posn/tx-set");
    set.update((sorted.len() as u32).to_le_bytes());
    for id in &sorted {
        set.update(id);
    }
    let set: [u8; 32] = set.finalize().into();
    let mut h = Sha256::new();
    tag(&mut h, "posn/slot-seed");
    h.update(parent);
    h.update(slot.to_le_bytes());
    h.update(set);
    h.finalize().into()
}

pub fn ref_validator_seed(seed: &[u8; 32], v: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    tag(&mut h, "posn/validator-seed");
    h.update(seed);
    h.update(v.to_le_bytes());
    h.finalize().into()
}

fn ref_rate_rng(vseed: &[u8; 32], id: &[u8; 32]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    tag(&mut h, "posn/rate-code");
    h.update(vseed);
    h.update(id);
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Reference first-spike step for validator `v` starting from rest.
pub fn ref_first_spike(v: u32, parent: &[u8; 32], slot: u64, txs: &[Transaction], cfg: &Config) -> Option<u32> {
    if txs.is_empty() {
        return None;
    }
    let ids: Vec<[u8; 32]> = txs.iter().map(|t| t.id).collect();
    let vseed = ref_validator_seed(&ref_slot_seed(parent, slot, &ids), v);
    let rate_on = matches!(cfg.encoding, EncodingMode::Rate | EncodingMode::Both);
    let temporal_on = matches!(cfg.encoding, EncodingMode::Temporal | EncodingMode::Both);
    let mut rngs: Vec<ChaCha8Rng> = txs.iter().map(|t| ref_rate_rng(&vseed, &t.id)).collect();
    let decay = (-cfg.lambda * cfg.dt).exp();
    let mut potential = cfg.v_reset;
    for k in 0..cfg.tau_steps as u64 {
        let mut current = 0.0;
        for (i, tx) in txs.iter().enumerate() {
            let fee = tx.fee as f64 / (tx.fee as f64 + cfg.c_fee);
            let w = 1.0 + fee;
            if rate_on {
                let p = (cfg.r_min + (cfg.r_max - cfg.r_min) * fee) * cfg.dt;
                if unit(&mut rngs[i]) < p {
                    current += w;
                }
            }
            if temporal_on {
                let isi = ((cfg.kappa / (tx.value as f64 + tx.fee as f64 + cfg.epsilon_isi)).ceil() as u64).max(1);
                if (k + 1) % isi == 0 {
                    current += w;
                }
            }
        }
        potential = potential * decay + current;
        if potential >= cfg.theta {
            return Some(k as u32);
        }
    }
    None
}

pub fn client() -> KeyPair {
    keygen(99, 1 << 32)
}

pub fn make_tx(n: u64, value: u64, fee: u64) -> Transaction {
    let mut id = [0u8; 32];
    id[..8].copy_from_slice(&n.to_le_bytes());
    id[8] = 0xAB;
    Transaction::new_signed(id, &client(), [7; 32], value, fee)
}
