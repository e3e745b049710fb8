//! Run statistics and byte-stable export.

pub mod export;
pub mod runlog;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

pub use export::{export_run, summary_json};
pub use runlog::{ForgedRecord, LedgerTotals, PenaltyObservation, RunLog, SlotOutcome, SlotRecord, TxRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no transaction was finalized")]
    NoFinalizedTx,
    #[error("need at least two categories")]
    TooFewCategories,
    #[error("all counts are zero")]
    NoSamples,
}

/// Finalized transactions per simulated second.
pub fn throughput(log: &RunLog) -> f64 {
    if log.duration_ms == 0 {
        return 0.0;
    }
    log.finalized_txs().count() as f64 / (log.duration_ms as f64 / 1000.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: u64,
    pub p95_ms: u64,
    pub max_ms: u64,
}

/// Nearest-rank percentile of an ascending slice, `0 < q <= 1`.
pub fn nearest_rank(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Submit-to-finalize latency over finalized transactions.
pub fn latency_stats(log: &RunLog) -> Result<LatencyStats, MetricsError> {
    let mut lat: Vec<u64> = log
        .finalized_txs()
        .filter_map(|t| t.finalize_ms.map(|f| f - t.submit_ms))
        .collect();
    latency_from_samples(&mut lat)
}

pub fn latency_from_samples(lat: &mut [u64]) -> Result<LatencyStats, MetricsError> {
    if lat.is_empty() {
        return Err(MetricsError::NoFinalizedTx);
    }
    lat.sort_unstable();
    Ok(LatencyStats {
        count: lat.len(),
        mean_ms: lat.iter().map(|&x| x as f64).sum::<f64>() / lat.len() as f64,
        p50_ms: nearest_rank(lat, 0.50).unwrap_or(0),
        p95_ms: nearest_rank(lat, 0.95).unwrap_or(0),
        max_ms: *lat.last().unwrap_or(&0),
    })
}

/// Compensated summation.
fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Shannon entropy in bits of the empirical distribution given by `counts`.
pub fn leader_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    -neumaier_sum(counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / t;
        p * p.log2()
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit against the uniform distribution.
pub fn chi_square_uniformity(counts: &[u64]) -> Result<ChiSquare, MetricsError> {
    if counts.len() < 2 {
        return Err(MetricsError::TooFewCategories);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(MetricsError::NoSamples);
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic = neumaier_sum(counts.iter().map(|&c| {
        let d = c as f64 - expected;
        d * d / expected
    }));
    let dof = counts.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|_| MetricsError::TooFewCategories)?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Leader counts for every validator, zeros included.
pub fn dense_leader_counts(log: &RunLog) -> Vec<u64> {
    let counts = log.leader_counts();
    (0..log.config.n_validators as u32)
        .map(|v| counts.get(&crate::types::ValidatorId(v)).copied().unwrap_or(0))
        .collect()
}

/// First slot whose snapshot can include a transaction submitted at
/// `submit_ms`.
pub fn first_eligible_slot(submit_ms: u64, delta_ms: u64, slot_len_ms: u64) -> u64 {
    (submit_ms + delta_ms) / slot_len_ms + 1
}

/// Per finalized transaction: slots elapsed from its first eligible slot
/// to the slot that finalized it, counting both.
pub fn slots_to_finality(log: &RunLog) -> Vec<u64> {
    log.finalized_txs()
        .filter_map(|t| {
            let fin = t.finalize_slot?.0;
            let first = first_eligible_slot(t.submit_ms, log.config.delta_net_ms, log.slot_len_ms);
            Some(fin.saturating_sub(first) + 1)
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(neumaier_sum(xs.iter().copied()) / xs.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub protocol: String,
    pub seed: u64,
    pub n_validators: usize,
    pub slots: usize,
    pub finalized_slots: usize,
    pub skipped_slots: usize,
    pub submitted_txs: usize,
    pub finalized_txs: usize,
    pub tps: f64,
    pub latency: Option<LatencyStats>,
    pub mean_slots_to_finality: Option<f64>,
    pub leader_entropy_bits: f64,
    pub max_entropy_bits: f64,
    pub leader_counts: Vec<u64>,
    pub chi_square: Option<ChiSquare>,
    pub messages: BTreeMap<String, u64>,
    pub msgs_per_finalized_block: Option<f64>,
    pub rejections: BTreeMap<String, u64>,
    pub penalties: usize,
    pub forged_proposals: usize,
    pub violations: Vec<String>,
}

impl SummaryStats {
    pub fn from_log(log: &RunLog) -> Self {
        let counts = dense_leader_counts(log);
        let finalized_slots = log.finalized_slots().count();
        let total_msgs: u64 = log.messages.values().sum();
        let stf: Vec<f64> = slots_to_finality(log).into_iter().map(|x| x as f64).collect();
        Self {
            protocol: log.protocol.name().to_string(),
            seed: log.seed,
            n_validators: log.config.n_validators,
            slots: log.slots.len(),
            finalized_slots,
            skipped_slots: log.slots.len() - finalized_slots,
            submitted_txs: log.txs.len(),
            finalized_txs: log.finalized_txs().count(),
            tps: throughput(log),
            latency: latency_stats(log).ok(),
            mean_slots_to_finality: mean(&stf),
            leader_entropy_bits: leader_entropy(&counts),
            max_entropy_bits: (log.config.n_validators as f64).log2(),
            chi_square: chi_square_uniformity(&counts).ok(),
            leader_counts: counts,
            messages: log
                .messages
                .iter()
                .map(|(k, v)| (serde_json::to_value(k).ok().and_then(|j| j.as_str().map(String::from)).unwrap_or_default(), *v))
                .collect(),
            msgs_per_finalized_block: (finalized_slots > 0).then(|| total_msgs as f64 / finalized_slots as f64),
            rejections: log.rejections.clone(),
            penalties: log.penalties.len(),
            forged_proposals: log.forged.len(),
            violations: log.violations.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_small_cases() {
        let xs = [10, 20, 30, 40, 50];
        assert_eq!(nearest_rank(&xs, 0.5), Some(30));
        assert_eq!(nearest_rank(&xs, 0.95), Some(50));
        assert_eq!(nearest_rank(&xs, 0.2), Some(10));
        assert_eq!(nearest_rank(&[], 0.5), None);
    }

    #[test]
    fn entropy_known_values() {
        assert!((leader_entropy(&[3, 1]) - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert!((leader_entropy(&[5; 256]) - 8.0).abs() < 1e-12);
        assert_eq!(leader_entropy(&[7, 0, 0]), 0.0);
        assert_eq!(leader_entropy(&[]), 0.0);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let c = chi_square_uniformity(&[100, 100, 100, 100]).unwrap();
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        let skew = chi_square_uniformity(&[400, 0, 0, 0]).unwrap();
        assert!(skew.p_value < 1e-10);
        assert_eq!(chi_square_uniformity(&[1]), Err(MetricsError::TooFewCategories));
    }

    #[test]
    fn eligibility_boundary() {
        // Snapshot at slot start s*L includes txs with submit + delta < s*L.
        assert_eq!(first_eligible_slot(0, 50, 200), 1);
        assert_eq!(first_eligible_slot(149, 50, 200), 1);
        assert_eq!(first_eligible_slot(150, 50, 200), 2);
    }
}
