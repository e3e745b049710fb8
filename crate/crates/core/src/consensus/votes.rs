use std::collections::BTreeMap;

use crate::codec::Digest;
use crate::crypto::KeyRegistry;
use crate::types::{ValidatorSet, Vote};

/// Smallest vote count strictly greater than two thirds of `n`.
pub fn quorum_threshold(n: usize) -> usize {
    2 * n / 3 + 1
}

/// One vote per voter, first occurrence wins, sorted by voter.
pub fn dedup_votes(votes: impl IntoIterator<Item = Vote>) -> Vec<Vote> {
    let mut by_voter = BTreeMap::new();
    for vote in votes {
        by_voter.entry(vote.voter).or_insert(vote);
    }
    by_voter.into_values().collect()
}

/// Filters to valid, deduplicated votes on `block_hash` and reports whether
/// they reach the quorum threshold.
pub fn collect_votes<'a>(
    votes: impl IntoIterator<Item = &'a Vote>,
    block_hash: &Digest,
    validators: &ValidatorSet,
    registry: &KeyRegistry,
) -> (bool, Vec<Vote>) {
    let quorum = dedup_votes(
        votes
            .into_iter()
            .filter(|v| &v.block_hash == block_hash && v.verify(validators, registry))
            .cloned(),
    );
    (quorum.len() >= quorum_threshold(validators.len()), quorum)
}
