//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{make_tx, ref_first_spike};
use posn::config::{Config, EncodingMode, PenaltyMode};
use posn::consensus::{collect_votes, quorum_threshold, Protocol, ReplayCache};
use posn::crypto::{keygen, KeyRegistry};
use posn::metrics::{
    chi_square_uniformity, dense_leader_counts, export_run, first_eligible_slot, latency_stats, leader_entropy,
    throughput, RunLog, SlotOutcome,
};
use posn::neuro::encode::SlotSeed;
use posn::neuro::{first_spike_step, lif_step, NeuronState};
use posn::netsim::{run, FaultPlan, LoadProfile, Partition, Scenario, Strategy};
use posn::rng::Stream;
use posn::types::{SlotId, Transaction, ValidatorId, ValidatorSet, Vote};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn load(duration_ms: u64, rate: f64) -> LoadProfile {
    LoadProfile {
        arrival_rate: rate,
        duration_ms,
        ..LoadProfile::default()
    }
}

/// Runs `f` over `jobs` on all cores, preserving order.
fn par_map<J: Sync, R: Send>(jobs: &[J], f: impl Fn(&J) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn run_ok(cfg: &Config, plan: &FaultPlan, load: &LoadProfile, p: Protocol) -> RunLog {
    run(cfg, plan, load, p).expect("valid scenario")
}

fn lif_decay() -> Outcome {
    let t0 = Instant::now();
    let cfg = Config::default();
    let v0 = 0.9;
    let mut state = NeuronState { v: v0, ..NeuronState::at_rest(&cfg) };
    let mut worst: f64 = 0.0;
    for k in 1..=100_000u32 {
        let (next, spiked) = lif_step(state, 0.0, cfg.dt);
        if spiked {
            return outcome(false, format!("spurious spike at step {k}"));
        }
        state = next;
        let want = v0 * (-cfg.lambda * f64::from(k) * cfg.dt).exp();
        worst = worst.max((state.v - want).abs());
    }
    let elapsed = t0.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("max error {worst:.3e} over 1e5 steps in {elapsed:.2?}"),
    )
}

fn replay_determinism() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Stream::for_purpose(2024, "acceptance/replay");
    let mut mismatches = 0;
    let mut fired = 0;
    for case in 0..200u64 {
        let n = rng.range_inclusive(1, 10) as usize;
        let v = rng.range_inclusive(0, n as u64 - 1) as u32;
        let mode = [EncodingMode::Rate, EncodingMode::Temporal, EncodingMode::Both][rng.range_inclusive(0, 2) as usize];
        let cfg = Config {
            theta: 1.0 + 3.0 * rng.unit(),
            lambda: 0.02 + 0.3 * rng.unit(),
            encoding: mode,
            kappa: 2000.0,
            ..Config::with_validators(n)
        };
        let mut parent = [0u8; 32];
        parent[..8].copy_from_slice(&rng.next_u64().to_le_bytes());
        let slot = rng.range_inclusive(0, 1_000_000);
        let k = rng.range_inclusive(1, 64);
        let txs: Vec<Transaction> = (0..k)
            .map(|i| make_tx(case * 1000 + i, rng.range_inclusive(1, 10_000), rng.range_inclusive(1, 1_000)))
            .collect();
        let seed = SlotSeed::derive(&parent, SlotId(slot), &txs);
        let main = first_spike_step(ValidatorId(v), &txs, &seed, &cfg);
        let cached = ReplayCache::new(&cfg).fire_steps(&parent, SlotId(slot), &txs)[v as usize];
        let reference = ref_first_spike(v, &parent, slot, &txs, &cfg);
        if main != reference || cached != reference {
            mismatches += 1;
        }
        fired += usize::from(reference.is_some());
    }
    let elapsed = t0.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("{mismatches} mismatches in 200 cases ({fired} fired) in {elapsed:.2?}"),
    )
}

fn byzantine_safety() -> Outcome {
    let t0 = Instant::now();
    let strategies = [Strategy::Equivocate, Strategy::ForgeSpike, Strategy::Withhold, Strategy::DelayMax];
    let mut jobs = Vec::new();
    for n in [4usize, 7, 10] {
        for s in strategies {
            for seed in 0..50u64 {
                jobs.push((n, s, seed));
            }
        }
    }
    let results = par_map(&jobs, |&(n, s, seed)| {
        let cfg = Config {
            master_seed: seed,
            gst_ms: 1000,
            ..Config::with_validators(n)
        };
        let plan = FaultPlan::uniform(s, (n - 1) / 3);
        run_ok(&cfg, &plan, &load(4000, 100.0), Protocol::Posn).violations
    });
    let bad: Vec<String> = jobs
        .iter()
        .zip(&results)
        .filter(|(_, v)| !v.is_empty())
        .map(|((n, s, seed), v)| format!("N={n} {} seed {seed}: {}", s.name(), v[0]))
        .collect();
    let elapsed = t0.elapsed();
    outcome(
        bad.is_empty() && elapsed < Duration::from_secs(600),
        match bad.first() {
            Some(b) => format!("{} runs with violations, e.g. {b}", bad.len()),
            None => format!("{} runs, 0 conflicting finalizations in {elapsed:.2?}", jobs.len()),
        },
    )
}

/// Slots-to-finality of transactions submitted after GST. Transactions
/// eligible in the final `margin` slots are excluded; any other
/// unfinalized one is returned as a miss.
fn post_gst_finality(log: &RunLog, margin: u64) -> (Vec<f64>, usize) {
    let gst = log.config.gst_ms;
    let n_slots = log.slots.len() as u64;
    let (mut out, mut missed) = (Vec::new(), 0);
    for t in log.txs.iter().filter(|t| t.submit_ms >= gst) {
        let first = first_eligible_slot(t.submit_ms, log.config.delta_net_ms, log.slot_len_ms);
        if first + margin >= n_slots {
            continue;
        }
        match t.finalize_slot {
            Some(s) => out.push((s.0.saturating_sub(first) + 1) as f64),
            None => missed += 1,
        }
    }
    (out, missed)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn liveness_bound() -> Outcome {
    let seeds: Vec<u64> = (0..30).collect();
    let arms = [None, Some(Strategy::Silent), Some(Strategy::Withhold)];
    let jobs: Vec<(Option<Strategy>, u64)> = arms.iter().flat_map(|a| seeds.iter().map(move |s| (*a, *s))).collect();
    let results = par_map(&jobs, |&(arm, seed)| {
        let cfg = Config {
            master_seed: seed,
            gst_ms: 2000,
            ..Config::with_validators(7)
        };
        let plan = arm.map_or_else(FaultPlan::none, |s| FaultPlan::uniform(s, 2));
        let log = run_ok(&cfg, &plan, &load(12_000, 100.0), Protocol::Posn);
        (post_gst_finality(&log, 5), log.violations.len())
    });
    let pooled = |arm: Option<Strategy>| {
        let (mut all, mut missed, mut viol) = (Vec::new(), 0, 0);
        for ((a, _), ((stf, m), v)) in jobs.iter().zip(&results) {
            if *a == arm {
                all.extend_from_slice(stf);
                missed += m;
                viol += v;
            }
        }
        (mean(&all), missed, viol)
    };
    let (base, base_missed, base_viol) = pooled(None);
    let mut pass = base_missed == 0 && base_viol == 0;
    let mut detail = format!("baseline {base:.3}");
    for s in [Strategy::Silent, Strategy::Withhold] {
        let (m, missed, viol) = pooled(Some(s));
        pass &= m - base <= 2.0 && missed == 0 && viol == 0;
        detail.push_str(&format!(", {} {m:.3} (+{:.3}, {missed} unfinalized)", s.name(), m - base));
    }
    outcome(pass, detail)
}

fn fairness() -> Outcome {
    let t0 = Instant::now();
    let cfg = Config {
        master_seed: 8,
        ..Config::with_validators(8)
    };
    let slot_len = Protocol::Posn.slot_len_ms(&cfg);
    let log = run_ok(&cfg, &FaultPlan::none(), &load(3000 * slot_len, 100.0), Protocol::Posn);
    let counts = dense_leader_counts(&log);
    let h = leader_entropy(&counts);
    let chi = chi_square_uniformity(&counts);
    let elapsed = t0.elapsed();
    let p = chi.as_ref().map_or(0.0, |c| c.p_value);
    outcome(
        log.slots.len() == 3000 && h >= 0.97 * 3.0 && p > 0.001 && elapsed < Duration::from_secs(120),
        format!(
            "{} slots, {} leaders, entropy {h:.4} bits (need {:.4}), chi-square p = {p:.4}, {elapsed:.2?}",
            log.slots.len(),
            counts.iter().sum::<u64>(),
            0.97 * 3.0
        ),
    )
}

fn forged_rejection() -> Outcome {
    let jobs: Vec<(usize, u64)> = [4usize, 7, 10].iter().flat_map(|&n| (0..20u64).map(move |s| (n, s))).collect();
    let results = par_map(&jobs, |&(n, seed)| {
        let cfg = Config {
            master_seed: seed,
            ..Config::with_validators(n)
        };
        let plan = FaultPlan::uniform(Strategy::ForgeSpike, (n - 1) / 3);
        let log = run_ok(&cfg, &plan, &load(5000, 100.0), Protocol::Posn);
        let honest: Vec<ValidatorId> = (0..n as u32).map(ValidatorId).filter(|v| plan.is_honest(*v)).collect();
        let total = log.forged.len();
        let failed = log
            .forged
            .iter()
            .filter(|f| !(f.contradicted && f.honest_rejecters == honest && f.honest_penalizers == honest))
            .count();
        (total, failed)
    });
    let total: usize = results.iter().map(|r| r.0).sum();
    let failed: usize = results.iter().map(|r| r.1).sum();
    outcome(
        total > 0 && failed == 0,
        format!("{total} forged proposals, {failed} not rejected and penalized by every honest validator"),
    )
}

fn quorum_sweep() -> Outcome {
    let mut errors = Vec::new();
    let mut cases = 0;
    for n in 1..=30usize {
        let keys: Vec<_> = (0..n as u64).map(|i| keygen(77, i)).collect();
        let mut reg = KeyRegistry::new();
        keys.iter().for_each(|k| reg.register(k));
        let set = ValidatorSet::from_keys(&keys);
        let oracle = (0..=n).find(|k| 3 * k > 2 * n).expect("n itself exceeds two thirds");
        if quorum_threshold(n) != oracle {
            errors.push(format!("threshold({n}) = {} != {oracle}", quorum_threshold(n)));
        }
        let hash = [n as u8; 32];
        let stranger = keygen(78, 0);
        for k in 0..=n {
            let mut votes: Vec<Vote> = (0..k)
                .map(|i| Vote::new_signed(SlotId(1), hash, ValidatorId(i as u32), &keys[i]))
                .collect();
            // Noise that must not count: a duplicate, a forged signature and
            // a vote for another block.
            if let Some(v) = votes.first().cloned() {
                votes.push(v);
            }
            if k < n {
                votes.push(Vote::new_signed(SlotId(1), hash, ValidatorId(k as u32), &stranger));
                votes.push(Vote::new_signed(SlotId(1), [0xEE; 32], ValidatorId(k as u32), &keys[k]));
            }
            let (finalized, quorum) = collect_votes(&votes, &hash, &set, &reg);
            cases += 1;
            if finalized != (k >= oracle) || quorum.len() != k {
                errors.push(format!("N={n} k={k}: finalized={finalized}, counted {}", quorum.len()));
            }
        }
    }
    outcome(
        errors.is_empty(),
        match errors.first() {
            Some(e) => format!("{} errors, e.g. {e}", errors.len()),
            None => format!("{cases} vote-count cases for N in 1..=30 agree with the oracle"),
        },
    )
}

fn conservation() -> Outcome {
    let mut jobs = Vec::new();
    for p in Protocol::ALL {
        for mode in [PenaltyMode::Burn, PenaltyMode::Redistribute] {
            for s in [None, Some(Strategy::Equivocate), Some(Strategy::ForgeSpike), Some(Strategy::Silent)] {
                for seed in 0..3u64 {
                    jobs.push((p, mode, s, seed));
                }
            }
        }
    }
    let results = par_map(&jobs, |&(p, mode, s, seed)| {
        let cfg = Config {
            master_seed: seed,
            penalty_mode: mode,
            ..Config::with_validators(7)
        };
        let plan = s.map_or_else(FaultPlan::none, |s| FaultPlan::uniform(s, 2));
        let log = run_ok(&cfg, &plan, &load(4000, 100.0), p);
        let burned: u64 = log.ledgers.iter().map(|l| l.burned).sum();
        let bad = log
            .ledgers
            .iter()
            .filter(|l| l.balance_sum as i128 + l.burned as i128 != l.minted as i128)
            .count();
        (bad, log.ledgers.len(), burned)
    });
    let bad: usize = results.iter().map(|r| r.0).sum();
    let ledgers: usize = results.iter().map(|r| r.1).sum();
    let burned: u64 = results.iter().map(|r| r.2).sum();
    outcome(
        bad == 0 && burned > 0,
        format!("{bad} of {ledgers} ledgers off balance across {} runs (total burned {burned})", jobs.len()),
    )
}

fn partition_consistency() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let results = par_map(&seeds, |&seed| {
        let cfg = Config {
            master_seed: seed,
            ..Config::default()
        };
        let len = Protocol::Posn.slot_len_ms(&cfg);
        let (start, end) = (10 * len, 15 * len);
        let plan = FaultPlan {
            byzantine: vec![],
            partitions: vec![Partition {
                start_ms: start,
                end_ms: end,
                side: [ValidatorId(0), ValidatorId(1)].into_iter().collect(),
            }],
        };
        let log = run_ok(&cfg, &plan, &load(30 * len, 100.0), Protocol::Posn);
        let during = log
            .slots
            .iter()
            .filter(|s| s.finalized_ms.is_some_and(|f| f > start && f < end) || (10..15).contains(&s.slot.0))
            .filter(|s| s.outcome == SlotOutcome::Finalized)
            .count();
        let resumed = log.slots[15..17].iter().any(|s| s.outcome == SlotOutcome::Finalized);
        (during, resumed, log.violations.len())
    });
    let during: usize = results.iter().map(|r| r.0).sum();
    let unresumed = results.iter().filter(|r| !r.1).count();
    let violations: usize = results.iter().map(|r| r.2).sum();
    outcome(
        during == 0 && unresumed == 0 && violations == 0,
        format!(
            "{} seeds: {during} finalizations during split, {violations} violations, {unresumed} not resumed within 2 slots",
            seeds.len()
        ),
    )
}

fn comparative_ordering() -> Outcome {
    let seeds: Vec<u64> = (0..20).collect();
    let jobs: Vec<(Protocol, u64)> = Protocol::ALL.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    let results = par_map(&jobs, |&(p, seed)| {
        let cfg = Config {
            master_seed: seed,
            ..Config::with_validators(8)
        };
        let log = run_ok(&cfg, &FaultPlan::none(), &load(10_000, 400.0), p);
        (latency_stats(&log).map_or(f64::INFINITY, |l| l.mean_ms), throughput(&log))
    });
    let stat = |p: Protocol, f: fn(&(f64, f64)) -> f64| {
        let xs: Vec<f64> = jobs.iter().zip(&results).filter(|((q, _), _)| *q == p).map(|(_, r)| f(r)).collect();
        mean(&xs)
    };
    let lat = |p| stat(p, |r| r.0);
    let tps = |p| stat(p, |r| r.1);
    let (ln, lr, lb) = (lat(Protocol::Posn), lat(Protocol::Por), lat(Protocol::Pob));
    let (tn, tr, tb) = (tps(Protocol::Posn), tps(Protocol::Por), tps(Protocol::Pob));
    outcome(
        ln < lr && lr < lb && tn > tr && tr > tb,
        format!("latency ms posn {ln:.1} < por {lr:.1} < pob {lb:.1}; tps posn {tn:.1} > por {tr:.1} > pob {tb:.1}"),
    )
}

fn export_determinism() -> Outcome {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let names = ["honest_4.toml", "forge_spike_7.toml", "partition_4.toml", "async_gst_7.toml"];
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut diffs = Vec::new();
    let mut bytes = 0;
    for name in names {
        let sc = Scenario::load(&dir.join(name)).expect("scenario loads");
        let mut outs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{name}-{rep}"));
            export_run(&sc.run().expect("scenario runs"), &out).expect("export");
            outs.push(out);
        }
        for file in ["summary.json", "slots.csv", "txs.csv", "decisions.jsonl"] {
            let a = std::fs::read(outs[0].join(file)).expect("read");
            let b = std::fs::read(outs[1].join(file)).expect("read");
            bytes += a.len();
            if a != b {
                diffs.push(format!("{name}/{file}"));
            }
        }
    }
    outcome(
        diffs.is_empty(),
        if diffs.is_empty() {
            format!("{} scenarios re-run, {bytes} exported bytes identical", names.len())
        } else {
            format!("differences in {}", diffs.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("lif oracle equivalence", lif_decay),
        ("replay determinism", replay_determinism),
        ("safety under byzantine faults", byzantine_safety),
        ("liveness degradation bound", liveness_bound),
        ("leader fairness", fairness),
        ("forged spike rejection", forged_rejection),
        ("quorum correctness", quorum_sweep),
        ("accounting conservation", conservation),
        ("partition consistency", partition_consistency),
        ("comparative ordering", comparative_ordering),
        ("harness determinism", export_determinism),
    ];
    let filter: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        println!(
            "criterion {id:>2} {:<32} {} ({}) [{:.1?}]",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed()
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
