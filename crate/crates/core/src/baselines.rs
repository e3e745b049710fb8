//! Reference leader elections for the PoB and PoR comparison protocols.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Digest, Encoder};
use crate::consensus::election::{smallest_reveal, vrf_input};
use crate::crypto::{vrf_eval, KeyPair, KeyRegistry, VrfOutput};
use crate::rng::Stream;
use crate::types::{SlotId, ValidatorId, ValidatorSet};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("all contribution scores are zero")]
    AllZeroScores,
    #[error("score for {0} is negative or not finite")]
    InvalidScore(ValidatorId),
}

/// Non-negative per-validator weights for PoB sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionScore {
    scores: Vec<f64>,
}

impl ContributionScore {
    pub fn new(scores: Vec<f64>) -> Result<Self, BaselineError> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(BaselineError::InvalidScore(ValidatorId(i as u32)));
        }
        if scores.iter().all(|&s| s == 0.0) {
            return Err(BaselineError::AllZeroScores);
        }
        Ok(Self { scores })
    }

    pub fn uniform(n: usize) -> Self {
        Self { scores: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores scaled to sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.scores.iter().sum();
        self.scores.iter().map(|s| s / total).collect()
    }
}

/// Per-slot PoB sampling seed, shared by every node.
pub fn pob_seed(slot: SlotId, parent_hash: &Digest) -> Digest {
    let mut e = Encoder::tagged("posn/pob-seed");
    e.u64(slot.0).fixed(parent_hash);
    e.digest()
}

/// Score-weighted draw seeded by `seed`.
pub fn pob_elect(slot: SlotId, scores: &ContributionScore, seed: &Digest) -> Result<ValidatorId, BaselineError> {
    if scores.scores.iter().all(|&s| s == 0.0) {
        return Err(BaselineError::AllZeroScores);
    }
    let mut key = Encoder::tagged("posn/pob-draw");
    key.fixed(seed).u64(slot.0);
    let u = Stream::from_key(key.digest()).unit();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in scores.normalized().into_iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return Ok(ValidatorId(i as u32));
            }
        }
    }
    // Rounding can leave the cumulative sum just below one.
    Ok(ValidatorId(last_positive as u32))
}

/// Smallest verified VRF value over `(slot || parent_hash)` among the reveals.
pub fn por_elect(
    slot: SlotId,
    parent_hash: &Digest,
    reveals: &BTreeMap<ValidatorId, VrfOutput>,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
) -> Option<ValidatorId> {
    smallest_reveal(validators.ids(), slot, parent_hash, reveals, validators, registry)
}

/// Every validator's reveal, as computed by their key holders.
pub fn por_reveals(slot: SlotId, parent_hash: &Digest, keys: &[KeyPair]) -> BTreeMap<ValidatorId, VrfOutput> {
    let input = vrf_input(slot, parent_hash);
    keys.iter()
        .enumerate()
        .map(|(i, k)| (ValidatorId(i as u32), vrf_eval(k.secret(), &input)))
        .collect()
}
