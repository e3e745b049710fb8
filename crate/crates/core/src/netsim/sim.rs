use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use super::delay::sample_delay;
use super::faults::{apply_strategy, FaultPlan, PlanError};
use super::load::{LoadError, LoadProfile};
use crate::codec::Digest;
use crate::config::{Config, ConfigError};
use crate::consensus::election::ReplayCache;
use crate::consensus::node::{Finalization, Input, Message, MessageKind, Node, NodeContext, Observation, Output, Peer, Protocol, Timer};
use crate::consensus::rewards::replay_contradicts;
use crate::crypto::{keygen, KeyPair, KeyRegistry};
use crate::metrics::runlog::{
    ForgedRecord, LedgerTotals, PenaltyObservation, RunLog, SlotOutcome, SlotRecord, TxRecord,
};
use crate::types::{Block, SlotId, ValidatorId, ValidatorSet};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    ConfigInvalid(#[from] ConfigError),
    #[error("invalid fault plan: {0}")]
    Plan(#[from] PlanError),
    #[error("invalid load profile: {0}")]
    Load(#[from] LoadError),
}

#[derive(Debug)]
enum EventKind {
    SlotStart(SlotId),
    Timer(Timer),
    Deliver { from: Peer, msg: Message, sent_ms: u64 },
}

/// A scheduled input for one validator, ordered by `(deliver_at, seq)`.
#[derive(Debug)]
pub struct SimEvent {
    pub deliver_at: u64,
    pub seq: u64,
    pub to: ValidatorId,
    kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.deliver_at, self.seq) == (other.deliver_at, other.seq)
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at, self.seq).cmp(&(other.deliver_at, other.seq))
    }
}

#[derive(Default)]
struct Queue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
}

impl Queue {
    fn next_seq(&mut self) -> u64 {
        let s = self.seq;
        self.seq += 1;
        s
    }

    fn push_with(&mut self, seq: u64, deliver_at: u64, to: ValidatorId, kind: EventKind) {
        self.heap.push(Reverse(SimEvent {
            deliver_at,
            seq,
            to,
            kind,
        }));
    }

    fn push(&mut self, deliver_at: u64, to: ValidatorId, kind: EventKind) {
        let seq = self.next_seq();
        self.push_with(seq, deliver_at, to, kind);
    }

    fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|Reverse(e)| e)
    }
}

#[derive(Default)]
struct SlotAgg {
    first: Option<Finalization>,
    finalizers: BTreeSet<ValidatorId>,
}

struct Collector {
    slots: BTreeMap<SlotId, SlotAgg>,
    tx_final: HashMap<Digest, (u64, SlotId)>,
    rejections: BTreeMap<String, u64>,
    rejecters: HashMap<Digest, BTreeSet<ValidatorId>>,
    forged_penalizers: HashMap<(ValidatorId, SlotId), BTreeSet<ValidatorId>>,
    penalties: Vec<PenaltyObservation>,
    malformed: u64,
    violations: Vec<String>,
}

impl Collector {
    fn observe(&mut self, node: ValidatorId, obs: Observation) {
        match obs {
            Observation::Finalized(f) => {
                for id in &f.tx_ids {
                    let e = self.tx_final.entry(*id).or_insert((f.at_ms, f.slot));
                    if f.at_ms < e.0 {
                        *e = (f.at_ms, f.slot);
                    }
                }
                let agg = self.slots.entry(f.slot).or_default();
                agg.finalizers.insert(node);
                match &agg.first {
                    Some(first) if first.block_hash != f.block_hash => {
                        self.violations.push(format!(
                            "conflicting finalization at slot {}: {} and {}",
                            f.slot.0,
                            hex::encode(&first.block_hash[..8]),
                            hex::encode(&f.block_hash[..8])
                        ));
                    }
                    Some(first) if first.at_ms <= f.at_ms => {}
                    _ => agg.first = Some(f),
                }
            }
            Observation::Skipped { .. } => {}
            Observation::Rejected {
                block_hash, reason, ..
            } => {
                *self.rejections.entry(reason.name().to_string()).or_insert(0) += 1;
                self.rejecters.entry(block_hash).or_default().insert(node);
            }
            Observation::Penalized {
                offender,
                slot,
                reason,
                amount,
            } => {
                if reason == "forged_spike" {
                    self.forged_penalizers.entry((offender, slot)).or_default().insert(node);
                }
                self.penalties.push(PenaltyObservation {
                    observer: node,
                    offender,
                    slot,
                    reason: reason.to_string(),
                    amount,
                });
            }
            Observation::Malformed { .. } => self.malformed += 1,
        }
    }
}

/// Key material for one run: validators first, then client accounts.
struct World {
    keys: Vec<KeyPair>,
    validators: Arc<ValidatorSet>,
    registry: Arc<KeyRegistry>,
}

fn world(cfg: &Config, clients: &[KeyPair]) -> World {
    let keys: Vec<KeyPair> = (0..cfg.n_validators as u64).map(|i| keygen(cfg.master_seed, i)).collect();
    let mut registry = KeyRegistry::new();
    keys.iter().chain(clients).for_each(|k| registry.register(k));
    World {
        validators: Arc::new(ValidatorSet::from_keys(&keys)),
        registry: Arc::new(registry),
        keys,
    }
}

/// Whether a forged block is refuted by replaying its own transactions.
fn forged_contradicted(block: &Block, w: &World, cfg: &Config, replay: &mut ReplayCache) -> bool {
    replay_contradicts(block, cfg, &w.validators, &w.registry, replay)
}

/// Executes one scenario to completion. The result is a pure function of
/// the arguments.
pub fn run(cfg: &Config, plan: &FaultPlan, load: &LoadProfile, protocol: Protocol) -> Result<RunLog, SimError> {
    cfg.validate()?;
    plan.validate(cfg)?;
    load.validate()?;

    let n = cfg.n_validators;
    let slot_len = protocol.slot_len_ms(cfg);
    let n_slots = (load.duration_ms / slot_len).max(1);
    let end_ms = n_slots * slot_len;

    let clients = load.client_keys(cfg.master_seed);
    let w = world(cfg, &clients);
    let ctx = NodeContext {
        cfg: Arc::new(cfg.clone()),
        validators: w.validators.clone(),
        registry: w.registry.clone(),
        protocol,
    };
    let mut nodes: Vec<Node> = w
        .keys
        .iter()
        .enumerate()
        .map(|(i, k)| Node::new(ValidatorId(i as u32), k.clone(), ctx.clone()))
        .collect();
    let mut replay = ReplayCache::new(cfg);
    let mut q = Queue::default();

    for v in 0..n as u32 {
        q.push(0, ValidatorId(v), EventKind::SlotStart(SlotId(0)));
    }
    let arrivals = load.arrivals(cfg.master_seed, &clients);
    let mut messages: BTreeMap<MessageKind, u64> = BTreeMap::new();
    for a in &arrivals {
        for v in 0..n as u32 {
            let to = ValidatorId(v);
            let seq = q.next_seq();
            let d = sample_delay(a.submit_ms, Peer::Client, Peer::Node(to), seq, cfg);
            let msg = Message::Tx {
                tx: a.tx.clone(),
                submitted_ms: a.submit_ms,
            };
            q.push_with(
                seq,
                a.submit_ms + d,
                to,
                EventKind::Deliver {
                    from: Peer::Client,
                    msg,
                    sent_ms: a.submit_ms,
                },
            );
            *messages.entry(MessageKind::Tx).or_insert(0) += 1;
        }
    }

    let mut col = Collector {
        slots: BTreeMap::new(),
        tx_final: HashMap::new(),
        rejections: BTreeMap::new(),
        rejecters: HashMap::new(),
        forged_penalizers: HashMap::new(),
        penalties: Vec::new(),
        malformed: 0,
        violations: Vec::new(),
    };
    let mut forged: Vec<Block> = Vec::new();
    let mut clock = 0u64;

    while let Some(ev) = q.pop() {
        if ev.deliver_at >= end_ms {
            break;
        }
        if ev.deliver_at < clock {
            col.violations
                .push(format!("event at {} processed after {}", ev.deliver_at, clock));
        }
        clock = ev.deliver_at;
        let now = ev.deliver_at;
        let me = ev.to;
        let input = match ev.kind {
            EventKind::SlotStart(s) => {
                if me.0 == 0 && s.0 + 1 < n_slots {
                    for v in 0..n as u32 {
                        q.push(now + slot_len, ValidatorId(v), EventKind::SlotStart(s.next()));
                    }
                }
                Input::SlotStart(s)
            }
            EventKind::Timer(t) => Input::Timer(t),
            EventKind::Deliver { from, msg, sent_ms } => {
                if sent_ms > now {
                    col.violations.push(format!("message delivered at {now} before it was sent at {sent_ms}"));
                }
                Input::Deliver { from, msg }
            }
        };

        let node = &mut nodes[me.index()];
        let outputs = node.step(now, &mut replay, input.clone());
        let emissions = match plan.strategy_of(me) {
            Some(strategy) => {
                let r = apply_strategy(strategy, node, &input, outputs, n);
                forged.extend(r.forged);
                r.emissions
            }
            None => outputs
                .into_iter()
                .map(|output| super::faults::Emission {
                    output,
                    not_before_ms: None,
                })
                .collect(),
        };
        let honest = plan.is_honest(me);
        for obs in node.take_observations() {
            if honest {
                col.observe(me, obs);
            }
        }

        for e in emissions {
            let send_at = e.not_before_ms.unwrap_or(now).max(now);
            let targets: Vec<(ValidatorId, Message)> = match e.output {
                Output::Timer { at_ms, timer } => {
                    q.push(at_ms.max(now), me, EventKind::Timer(timer));
                    continue;
                }
                Output::Broadcast(msg) => (0..n as u32)
                    .map(ValidatorId)
                    .filter(|&v| v != me)
                    .map(|v| (v, msg.clone()))
                    .collect(),
                Output::Send { to, msg } if to != me && to.index() < n => vec![(to, msg)],
                Output::Send { .. } => continue,
            };
            for (to, msg) in targets {
                let release = plan.partition_release(send_at, me, to);
                let seq = q.next_seq();
                let d = sample_delay(release, Peer::Node(me), Peer::Node(to), seq, cfg);
                *messages.entry(msg.kind()).or_insert(0) += 1;
                q.push_with(
                    seq,
                    release + d,
                    to,
                    EventKind::Deliver {
                        from: Peer::Node(me),
                        msg,
                        sent_ms: send_at,
                    },
                );
            }
        }
    }

    Ok(assemble(
        cfg, plan, load, protocol, slot_len, n_slots, &arrivals, &nodes, col, forged, messages, &w, &mut replay,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &Config,
    plan: &FaultPlan,
    load: &LoadProfile,
    protocol: Protocol,
    slot_len: u64,
    n_slots: u64,
    arrivals: &[super::load::Arrival],
    nodes: &[Node],
    mut col: Collector,
    forged: Vec<Block>,
    messages: BTreeMap<MessageKind, u64>,
    w: &World,
    replay: &mut ReplayCache,
) -> RunLog {
    let slots: Vec<SlotRecord> = (0..n_slots)
        .map(|s| {
            let slot = SlotId(s);
            let start_ms = s * slot_len;
            match col.slots.get(&slot).and_then(|a| a.first.as_ref().map(|f| (f, a.finalizers.len()))) {
                Some((f, count)) => SlotRecord {
                    slot,
                    start_ms,
                    outcome: SlotOutcome::Finalized,
                    leader: Some(f.proposer),
                    fire_step: Some(f.fire_step),
                    tie_size: f.tie_size,
                    vrf_used: f.vrf_used,
                    quorum_size: f.quorum_size,
                    tx_count: f.tx_ids.len(),
                    block_hash: Some(hex::encode(f.block_hash)),
                    finalized_ms: Some(f.at_ms),
                    honest_finalizers: count,
                    rewards_minted: f.rewards_minted,
                },
                None => SlotRecord {
                    slot,
                    start_ms,
                    outcome: SlotOutcome::Skipped,
                    leader: None,
                    fire_step: None,
                    tie_size: 0,
                    vrf_used: false,
                    quorum_size: 0,
                    tx_count: 0,
                    block_hash: None,
                    finalized_ms: None,
                    honest_finalizers: 0,
                    rewards_minted: 0,
                },
            }
        })
        .collect();

    let txs: Vec<TxRecord> = arrivals
        .iter()
        .map(|a| {
            let fin = col.tx_final.get(&a.tx.id);
            if let Some((ms, _)) = fin {
                if *ms < a.submit_ms {
                    col.violations
                        .push(format!("tx {} finalized before submission", hex::encode(&a.tx.id[..8])));
                }
            }
            TxRecord {
                id: hex::encode(a.tx.id),
                submit_ms: a.submit_ms,
                finalize_ms: fin.map(|f| f.0),
                finalize_slot: fin.map(|f| f.1),
            }
        })
        .collect();

    let wrongly_penalized: BTreeSet<(ValidatorId, SlotId)> = col
        .penalties
        .iter()
        .filter(|p| plan.is_honest(p.offender))
        .map(|p| (p.offender, p.slot))
        .collect();
    for (v, s) in wrongly_penalized {
        col.violations.push(format!("honest {v} penalized for {s}"));
    }

    let honest: Vec<&Node> = nodes.iter().filter(|nd| plan.is_honest(nd.id())).collect();
    let chains: Vec<Vec<Digest>> = honest
        .iter()
        .map(|nd| nd.chain().finalized.iter().map(|b| b.hash()).collect())
        .collect();
    for i in 0..chains.len() {
        for j in i + 1..chains.len() {
            let (a, b) = (&chains[i], &chains[j]);
            let k = a.len().min(b.len());
            if let Some(h) = (0..k).find(|&h| a[h] != b[h]) {
                col.violations.push(format!(
                    "fork: {} and {} diverge at height {}",
                    honest[i].id(),
                    honest[j].id(),
                    h
                ));
            }
        }
    }

    let ledgers: Vec<LedgerTotals> = nodes
        .iter()
        .map(|nd| {
            let c = nd.chain();
            let t = LedgerTotals {
                node: nd.id(),
                honest: plan.is_honest(nd.id()),
                height: c.height(),
                minted: c.minted(),
                burned: c.burned(),
                balance_sum: c.balances.values().sum(),
                conserved: c.is_conserved(),
                integrity: c.verify_integrity(),
            };
            if t.honest && !t.conserved {
                col.violations.push(format!("ledger of {} is not conserved", t.node));
            }
            if t.honest && !t.integrity {
                col.violations.push(format!("chain of {} fails integrity rescan", t.node));
            }
            t
        })
        .collect();

    let forged: Vec<ForgedRecord> = forged
        .iter()
        .map(|b| {
            let hash = b.hash();
            ForgedRecord {
                slot: b.slot,
                proposer: b.proposer,
                block_hash: hex::encode(hash),
                contradicted: forged_contradicted(b, w, cfg, replay),
                honest_rejecters: col
                    .rejecters
                    .get(&hash)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default(),
                honest_penalizers: col
                    .forged_penalizers
                    .get(&(b.proposer, b.slot))
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default(),
            }
        })
        .collect();

    RunLog {
        protocol,
        seed: cfg.master_seed,
        config: cfg.clone(),
        faults: plan.clone(),
        load: load.clone(),
        slot_len_ms: slot_len,
        duration_ms: n_slots * slot_len,
        slots,
        txs,
        messages,
        rejections: col.rejections,
        malformed: col.malformed,
        penalties: col.penalties,
        forged,
        ledgers,
        violations: col.violations,
    }
}
