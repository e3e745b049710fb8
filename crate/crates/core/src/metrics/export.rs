use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::runlog::{RunLog, SlotOutcome};
use super::SummaryStats;
use crate::types::{SlotId, ValidatorId};

/// One leader decision per slot, as written to `decisions.jsonl`.
#[derive(Serialize)]
struct Decision<'a> {
    slot: SlotId,
    outcome: SlotOutcome,
    leader: Option<ValidatorId>,
    fire_step: Option<u32>,
    tie_size: usize,
    vrf_used: bool,
    quorum_size: usize,
    tx_count: usize,
    block_hash: Option<&'a str>,
}

pub fn summary_json(log: &RunLog) -> String {
    let mut s = serde_json::to_string_pretty(&SummaryStats::from_log(log)).expect("summary serializes");
    s.push('\n');
    s
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn slots_csv(log: &RunLog) -> String {
    let mut out = String::from(
        "slot,start_ms,outcome,leader,fire_step,tie_size,vrf_used,quorum_size,tx_count,finalized_ms,honest_finalizers,rewards_minted,block_hash\n",
    );
    for s in &log.slots {
        let outcome = match s.outcome {
            SlotOutcome::Finalized => "finalized",
            SlotOutcome::Skipped => "skipped",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.slot.0,
            s.start_ms,
            outcome,
            opt(s.leader.map(|v| v.0)),
            opt(s.fire_step),
            s.tie_size,
            s.vrf_used,
            s.quorum_size,
            s.tx_count,
            opt(s.finalized_ms),
            s.honest_finalizers,
            s.rewards_minted,
            s.block_hash.as_deref().unwrap_or("")
        );
    }
    out
}

pub fn txs_csv(log: &RunLog) -> String {
    let mut out = String::from("id,submit_ms,finalize_ms,finalize_slot,latency_ms\n");
    for t in log.finalized_txs() {
        let fin = t.finalize_ms.unwrap_or(t.submit_ms);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.id,
            t.submit_ms,
            fin,
            opt(t.finalize_slot.map(|s| s.0)),
            fin - t.submit_ms
        );
    }
    out
}

pub fn decisions_jsonl(log: &RunLog) -> String {
    let mut out = String::new();
    for s in &log.slots {
        let d = Decision {
            slot: s.slot,
            outcome: s.outcome,
            leader: s.leader,
            fire_step: s.fire_step,
            tie_size: s.tie_size,
            vrf_used: s.vrf_used,
            quorum_size: s.quorum_size,
            tx_count: s.tx_count,
            block_hash: s.block_hash.as_deref(),
        };
        out.push_str(&serde_json::to_string(&d).expect("decision serializes"));
        out.push('\n');
    }
    out
}

/// Writes `summary.json`, `slots.csv`, `txs.csv` and `decisions.jsonl`
/// into `dir`, creating it if needed.
pub fn export_run(log: &RunLog, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), summary_json(log))?;
    fs::write(dir.join("slots.csv"), slots_csv(log))?;
    fs::write(dir.join("txs.csv"), txs_csv(log))?;
    fs::write(dir.join("decisions.jsonl"), decisions_jsonl(log))?;
    Ok(())
}
