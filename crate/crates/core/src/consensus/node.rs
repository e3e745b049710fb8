//! Event-driven validator state machine shared by PoSN and the baselines.
//!
//! A node never touches the network or a clock. The harness feeds it
//! [`Input`]s stamped with the current simulated time and routes the
//! returned [`Output`]s.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::election::{earliest, vrf_input, ElectionResult, ReplayCache};
use super::phase::SlotPhase;
use super::rewards::{apply_penalty, replay_forgery, Evidence};
use super::validation::{propose, validate_proposal, LocalView, RejectReason, Verdict};
use super::votes::collect_votes;
use crate::baselines::{pob_elect, pob_seed, ContributionScore};
use crate::chain::ChainState;
use crate::codec::Digest;
use crate::config::Config;
use crate::crypto::{vrf_eval, KeyPair, KeyRegistry, VrfOutput};
use crate::types::{select_prevalidated, Block, SlotId, Transaction, ValidatorId, ValidatorSet, Vote};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Posn,
    Pob,
    Por,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Posn, Protocol::Pob, Protocol::Por];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Posn => "posn",
            Protocol::Pob => "pob",
            Protocol::Por => "por",
        }
    }

    /// Extra election latency on top of the shared window.
    pub fn overhead_ms(self, cfg: &Config) -> u64 {
        match self {
            Protocol::Posn => 0,
            Protocol::Pob => cfg.pob_overhead(),
            Protocol::Por => cfg.por_overhead(),
        }
    }

    /// Window, election overhead, then one round trip each for the
    /// proposal and the votes.
    pub fn slot_len_ms(self, cfg: &Config) -> u64 {
        cfg.window_ms() + self.overhead_ms(cfg) + 2 * cfg.delta_net_ms
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "posn" => Ok(Protocol::Posn),
            "pob" => Ok(Protocol::Pob),
            "por" => Ok(Protocol::Por),
            other => Err(format!("unknown protocol {other:?} (expected posn, pob or por)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    Tx {
        tx: Transaction,
        submitted_ms: u64,
    },
    Proposal(Block),
    Vote(Vote),
    Reveal {
        slot: SlotId,
        parent_hash: Digest,
        validator: ValidatorId,
        output: VrfOutput,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Tx,
    Proposal,
    Vote,
    Reveal,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Tx { .. } => MessageKind::Tx,
            Message::Proposal(_) => MessageKind::Proposal,
            Message::Vote(_) => MessageKind::Vote,
            Message::Reveal { .. } => MessageKind::Reveal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Peer {
    Client,
    Node(ValidatorId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimerKind {
    /// The local neuron reaches threshold.
    Spike,
    /// Last moment to wait for tied validators' reveals before proposing.
    RevealDeadline,
    /// Re-examine proposals parked while tie reveals were outstanding.
    PendingCheck,
    /// Baseline leader proposes after the election overhead.
    BaselinePropose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Timer {
    pub slot: SlotId,
    /// View generation; bumped when the tip changes mid-slot.
    pub epoch: u32,
    pub kind: TimerKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Input {
    SlotStart(SlotId),
    Timer(Timer),
    Deliver { from: Peer, msg: Message },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output {
    Broadcast(Message),
    Send { to: ValidatorId, msg: Message },
    Timer { at_ms: u64, timer: Timer },
}

/// Finalized block summary as seen by one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finalization {
    pub slot: SlotId,
    pub block_hash: Digest,
    pub proposer: ValidatorId,
    pub fire_step: u32,
    pub tie_size: usize,
    pub vrf_used: bool,
    pub quorum_size: usize,
    pub tx_ids: Vec<Digest>,
    pub at_ms: u64,
    pub rewards_minted: i64,
}

/// Things a node noticed; drained by the harness after each step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observation {
    Finalized(Finalization),
    Skipped {
        slot: SlotId,
    },
    Rejected {
        slot: SlotId,
        proposer: ValidatorId,
        block_hash: Digest,
        reason: RejectReason,
    },
    Penalized {
        offender: ValidatorId,
        slot: SlotId,
        reason: &'static str,
        amount: u64,
    },
    Malformed {
        from: Peer,
        kind: MessageKind,
    },
}

#[derive(Clone, Debug)]
struct PendingTx {
    tx: Transaction,
    submitted_ms: u64,
}

#[derive(Debug)]
struct SlotView {
    slot: SlotId,
    start_ms: u64,
    epoch: u32,
    phase: SlotPhase,
    parent_hash: Digest,
    txs: Vec<Transaction>,
    fire: Arc<Vec<Option<u32>>>,
    voted: bool,
    proposed: bool,
    spiked: bool,
    validated: HashSet<Digest>,
    relayed: HashSet<Digest>,
    pending: Vec<Digest>,
    pending_timer: bool,
}

impl SlotView {
    fn advance(&mut self, next: SlotPhase) {
        if self.phase.can_advance_to(next) {
            self.phase = next;
        }
    }
}

/// Shared run-wide inputs for constructing nodes.
#[derive(Clone, Debug)]
pub struct NodeContext {
    pub cfg: Arc<Config>,
    pub validators: Arc<ValidatorSet>,
    pub registry: Arc<KeyRegistry>,
    pub protocol: Protocol,
}

pub struct Node {
    id: ValidatorId,
    keys: KeyPair,
    ctx: NodeContext,
    scores: ContributionScore,
    chain: ChainState,
    mempool: BTreeMap<Digest, PendingTx>,
    view: Option<SlotView>,
    blocks: HashMap<Digest, Block>,
    votes: HashMap<Digest, BTreeMap<ValidatorId, Vote>>,
    reveals: HashMap<(SlotId, Digest), BTreeMap<ValidatorId, VrfOutput>>,
    first_proposal: HashMap<(ValidatorId, SlotId), Block>,
    penalized: HashSet<(ValidatorId, SlotId, &'static str)>,
    observations: Vec<Observation>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.id)
            .field("protocol", &self.ctx.protocol)
            .field("height", &self.chain.height())
            .finish_non_exhaustive()
    }
}

const EQUIVOCATION_MEMORY_SLOTS: u64 = 16;

impl Node {
    pub fn new(id: ValidatorId, keys: KeyPair, ctx: NodeContext) -> Self {
        let n = ctx.validators.len();
        Self {
            id,
            keys,
            scores: ContributionScore::uniform(n),
            ctx,
            chain: ChainState::new(),
            mempool: BTreeMap::new(),
            view: None,
            blocks: HashMap::new(),
            votes: HashMap::new(),
            reveals: HashMap::new(),
            first_proposal: HashMap::new(),
            penalized: HashSet::new(),
            observations: Vec::new(),
        }
    }

    pub fn id(&self) -> ValidatorId {
        self.id
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn protocol(&self) -> Protocol {
        self.ctx.protocol
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn current_slot(&self) -> Option<SlotId> {
        self.view.as_ref().map(|v| v.slot)
    }

    pub fn phase(&self) -> Option<SlotPhase> {
        self.view.as_ref().map(|v| v.phase)
    }

    /// End of the current slot in simulated ms.
    pub fn slot_end_ms(&self) -> Option<u64> {
        let len = self.ctx.protocol.slot_len_ms(&self.ctx.cfg);
        self.view.as_ref().map(|v| v.start_ms + len)
    }

    pub fn take_observations(&mut self) -> Vec<Observation> {
        std::mem::take(&mut self.observations)
    }

    pub fn step(&mut self, now: u64, replay: &mut ReplayCache, input: Input) -> Vec<Output> {
        let mut out = Vec::new();
        match input {
            Input::SlotStart(slot) => self.on_slot_start(now, slot, replay, &mut out),
            Input::Timer(t) => {
                let live = self.view.as_ref().is_some_and(|v| v.slot == t.slot && v.epoch == t.epoch);
                if live {
                    self.on_timer(now, t.kind, replay, &mut out);
                }
            }
            Input::Deliver { from, msg } => self.on_message(now, from, msg, replay, &mut out),
        }
        out
    }

    fn cfg(&self) -> &Config {
        &self.ctx.cfg
    }

    fn vote_deadline(&self, v: &SlotView) -> u64 {
        v.start_ms + self.cfg().window_ms() + self.ctx.protocol.overhead_ms(self.cfg()) + self.cfg().delta_net_ms
    }

    fn spike_time(&self, start_ms: u64, step: u32) -> u64 {
        start_ms + (f64::from(step + 1) * self.cfg().dt).ceil() as u64
    }

    fn on_slot_start(&mut self, now: u64, slot: SlotId, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        if let Some(v) = self.view.as_mut() {
            if !v.phase.is_terminal() {
                v.advance(SlotPhase::Skipped);
                self.observations.push(Observation::Skipped { slot: v.slot });
            }
        }
        self.reveals.retain(|(s, _), _| *s >= slot);
        self.first_proposal
            .retain(|(_, s), _| s.0 + EQUIVOCATION_MEMORY_SLOTS >= slot.0);
        self.view = Some(SlotView {
            slot,
            start_ms: now,
            epoch: 0,
            phase: SlotPhase::Encoding,
            parent_hash: self.chain.tip_hash(),
            txs: Vec::new(),
            fire: Arc::new(Vec::new()),
            voted: false,
            proposed: false,
            spiked: false,
            validated: HashSet::new(),
            relayed: HashSet::new(),
            pending: Vec::new(),
            pending_timer: false,
        });
        self.prepare(now, replay, out);
    }

    /// Freezes the slot's inputs on the current tip and schedules this
    /// node's election duties. Runs again if the tip moves mid-slot.
    fn prepare(&mut self, now: u64, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let delta = self.cfg().delta_net_ms;
        let max = self.cfg().max_block_txs;
        let parent = self.chain.tip_hash();
        let protocol = self.ctx.protocol;
        let Some(start) = self.view.as_ref().map(|v| v.start_ms) else {
            return;
        };
        let eligible = self
            .mempool
            .values()
            .filter(|p| p.submitted_ms + delta < start)
            .map(|p| &p.tx);
        let txs = select_prevalidated(eligible, max);
        let fire = match protocol {
            Protocol::Posn => replay.fire_steps(&parent, self.view.as_ref().unwrap().slot, &txs),
            _ => Arc::new(Vec::new()),
        };

        let v = self.view.as_mut().expect("view exists");
        v.epoch += 1;
        v.parent_hash = parent;
        v.txs = txs;
        v.fire = fire;
        v.spiked = false;
        v.validated.clear();
        v.pending.clear();
        v.pending_timer = false;
        let (slot, epoch) = (v.slot, v.epoch);
        let timer = |kind, at_ms: u64| Output::Timer {
            at_ms: at_ms.max(now),
            timer: Timer { slot, epoch, kind },
        };

        match protocol {
            Protocol::Posn => {
                v.advance(SlotPhase::Spiking);
                let mine = v.fire.get(self.id.index()).copied().flatten();
                if let (Some((min, _)), Some(step)) = (earliest(&v.fire), mine) {
                    if step == min && !v.proposed {
                        let at = self.spike_time(start, step);
                        out.push(timer(TimerKind::Spike, at));
                    }
                }
            }
            Protocol::Por => {
                v.advance(SlotPhase::Proposal);
                let output = vrf_eval(self.keys.secret(), &vrf_input(slot, &parent));
                self.reveals
                    .entry((slot, parent))
                    .or_default()
                    .insert(self.id, output);
                out.push(Output::Broadcast(Message::Reveal {
                    slot,
                    parent_hash: parent,
                    validator: self.id,
                    output,
                }));
                let at = start + self.cfg().window_ms() + protocol.overhead_ms(self.cfg());
                out.push(timer(TimerKind::BaselinePropose, at));
            }
            Protocol::Pob => {
                v.advance(SlotPhase::Proposal);
                let leader = pob_elect(slot, &self.scores, &pob_seed(slot, &parent)).expect("uniform scores");
                if leader == self.id {
                    let at = start + self.cfg().window_ms() + protocol.overhead_ms(self.cfg());
                    out.push(timer(TimerKind::BaselinePropose, at));
                }
            }
        }

        let stored: Vec<Digest> = {
            let mut hs: Vec<_> = self
                .blocks
                .iter()
                .filter(|(_, b)| b.slot == slot && b.parent_hash == parent)
                .map(|(h, _)| *h)
                .collect();
            hs.sort();
            hs
        };
        for h in stored {
            self.consider(now, h, replay, out);
        }
    }

    fn on_timer(&mut self, now: u64, kind: TimerKind, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        match kind {
            TimerKind::Spike => self.on_spike(now, replay, out),
            TimerKind::RevealDeadline => self.try_tie_propose(now, true, replay, out),
            TimerKind::PendingCheck => {
                let pending = self.view.as_mut().map(|v| std::mem::take(&mut v.pending)).unwrap_or_default();
                for h in pending {
                    self.judge(now, h, replay, out);
                }
            }
            TimerKind::BaselinePropose => self.baseline_propose(now, replay, out),
        }
    }

    fn on_spike(&mut self, now: u64, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let delta = self.cfg().delta_net_ms;
        let v = self.view.as_mut().expect("live timer");
        if v.proposed {
            return;
        }
        v.spiked = true;
        v.advance(SlotPhase::Proposal);
        let Some((min, tie)) = earliest(&v.fire) else {
            return;
        };
        if tie.len() == 1 {
            let election = ElectionResult {
                leader: self.id,
                fire_step: min,
                tie_set: tie,
                vrf_used: false,
            };
            self.do_propose(now, election, replay, out);
            return;
        }
        let (slot, parent, epoch) = (v.slot, v.parent_hash, v.epoch);
        let output = vrf_eval(self.keys.secret(), &vrf_input(slot, &parent));
        self.reveals
            .entry((slot, parent))
            .or_default()
            .insert(self.id, output);
        out.push(Output::Broadcast(Message::Reveal {
            slot,
            parent_hash: parent,
            validator: self.id,
            output,
        }));
        // One past the worst-case delay, so a reveal due exactly at
        // now + delta is processed before the deadline.
        out.push(Output::Timer {
            at_ms: now + delta + 1,
            timer: Timer {
                slot,
                epoch,
                kind: TimerKind::RevealDeadline,
            },
        });
        self.try_tie_propose(now, false, replay, out);
    }

    /// A tied leader proposes once it holds the smallest known reveal and
    /// either every tied reveal has arrived or the wait is over.
    fn try_tie_propose(&mut self, now: u64, force: bool, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let Some(v) = self.view.as_ref() else { return };
        if v.proposed || !v.spiked {
            return;
        }
        let Some((min, tie)) = earliest(&v.fire) else { return };
        let known = self.reveals.get(&(v.slot, v.parent_hash));
        let Some(own) = known.and_then(|k| k.get(&self.id)) else {
            return;
        };
        let known = known.expect("own reveal stored");
        if tie.iter().any(|t| known.get(t).is_some_and(|r| r.value < own.value)) {
            return;
        }
        if !force && !tie.iter().all(|t| known.contains_key(t)) {
            return;
        }
        let election = ElectionResult {
            leader: self.id,
            fire_step: min,
            tie_set: tie,
            vrf_used: true,
        };
        self.do_propose(now, election, replay, out);
    }

    fn do_propose(&mut self, now: u64, election: ElectionResult, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let v = self.view.as_mut().expect("live view");
        let block = propose(
            self.id,
            &self.keys,
            v.slot,
            v.parent_hash,
            &v.txs,
            &election,
            &self.ctx.cfg,
            &self.ctx.registry,
        )
        .expect("caller is the leader");
        v.proposed = true;
        out.push(Output::Broadcast(Message::Proposal(block.clone())));
        self.on_proposal(now, Peer::Node(self.id), block, replay, out);
    }

    fn baseline_propose(&mut self, now: u64, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let protocol = self.ctx.protocol;
        let v = self.view.as_mut().expect("live timer");
        if v.proposed {
            return;
        }
        let vrf = match protocol {
            Protocol::Por => {
                let known = self.reveals.get(&(v.slot, v.parent_hash));
                let Some(own) = known.and_then(|k| k.get(&self.id)).cloned() else {
                    return;
                };
                if known.expect("own reveal").values().any(|r| r.value < own.value) {
                    return;
                }
                Some(own)
            }
            _ => None,
        };
        let block = Block::unsigned(v.slot, self.id, v.parent_hash, v.txs.clone(), 0, vrf).sign(&self.keys);
        v.proposed = true;
        out.push(Output::Broadcast(Message::Proposal(block.clone())));
        self.on_proposal(now, Peer::Node(self.id), block, replay, out);
    }

    fn on_message(&mut self, now: u64, from: Peer, msg: Message, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let kind = msg.kind();
        match msg {
            Message::Tx { tx, submitted_ms } => {
                if self.chain.contains_tx(&tx.id) || self.mempool.contains_key(&tx.id) {
                    return;
                }
                if !tx.verify(&self.ctx.registry) {
                    self.observations.push(Observation::Malformed { from, kind });
                    return;
                }
                self.mempool.insert(tx.id, PendingTx { tx, submitted_ms });
            }
            Message::Reveal {
                slot,
                parent_hash,
                validator,
                output,
            } => {
                let ok = self
                    .ctx
                    .validators
                    .pk(validator)
                    .is_some_and(|pk| self.ctx.registry.vrf_verify(pk, &vrf_input(slot, &parent_hash), &output));
                if !ok {
                    self.observations.push(Observation::Malformed { from, kind });
                    return;
                }
                if self.current_slot().is_some_and(|s| slot < s) {
                    return;
                }
                self.reveals
                    .entry((slot, parent_hash))
                    .or_default()
                    .entry(validator)
                    .or_insert(output);
                let current = self
                    .view
                    .as_ref()
                    .is_some_and(|v| v.slot == slot && v.parent_hash == parent_hash);
                if current && self.ctx.protocol == Protocol::Posn {
                    self.try_tie_propose(now, false, replay, out);
                    self.recheck_pending(now, replay, out);
                }
            }
            Message::Proposal(block) => self.on_proposal(now, from, block, replay, out),
            Message::Vote(vote) => {
                if !vote.verify(&self.ctx.validators, &self.ctx.registry) {
                    self.observations.push(Observation::Malformed { from, kind });
                    return;
                }
                if self.chain.tip_slot().is_some_and(|t| vote.slot <= t) {
                    return;
                }
                self.votes
                    .entry(vote.block_hash)
                    .or_default()
                    .entry(vote.voter)
                    .or_insert(vote);
                self.try_finalize(now, replay, out);
            }
        }
    }

    fn on_proposal(&mut self, now: u64, from: Peer, block: Block, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        if !block.verify_signature(&self.ctx.validators, &self.ctx.registry) {
            self.observations.push(Observation::Malformed {
                from,
                kind: MessageKind::Proposal,
            });
            return;
        }
        let hash = block.hash();
        let key = (block.proposer, block.slot);
        let seen = self.first_proposal.get(&key).is_some_and(|f| f.hash() == hash);
        match self.first_proposal.get(&key) {
            Some(first) if first.hash() != hash => {
                let ev = Evidence::Equivocation {
                    first: first.clone(),
                    second: block.clone(),
                };
                self.penalize(ev, replay);
            }
            Some(_) => {}
            None => {
                self.first_proposal.insert(key, block.clone());
            }
        }
        if self.chain.tip_slot().is_some_and(|t| block.slot <= t) {
            // Too late to vote on, but a forged claim is still refutable
            // from the block alone.
            if !seen && self.ctx.protocol == Protocol::Posn {
                if let Some(reason) = replay_forgery(&block, self.cfg(), &self.ctx.validators, &self.ctx.registry, replay) {
                    self.observations.push(Observation::Rejected {
                        slot: block.slot,
                        proposer: block.proposer,
                        block_hash: hash,
                        reason,
                    });
                    self.penalize(Evidence::ForgedSpike { block }, replay);
                }
            }
            return;
        }
        let slot = block.slot;
        if let Some(out) = &block.vrf_output {
            let pk = self.ctx.validators.pk(block.proposer).expect("signature verified");
            if self
                .ctx
                .registry
                .vrf_verify(pk, &vrf_input(slot, &block.parent_hash), out)
            {
                self.reveals
                    .entry((slot, block.parent_hash))
                    .or_default()
                    .entry(block.proposer)
                    .or_insert(*out);
            }
        }
        self.blocks.entry(hash).or_insert(block);

        if let Some(v) = self.view.as_mut() {
            if v.slot == slot && v.relayed.insert(hash) && from != Peer::Node(self.id) {
                let b = self.blocks[&hash].clone();
                out.push(Output::Broadcast(Message::Proposal(b)));
            }
        }
        self.consider(now, hash, replay, out);
        self.try_finalize(now, replay, out);
    }

    /// Validates a current-slot proposal once, parking tied claims until
    /// the tied validators' reveals are in.
    fn consider(&mut self, now: u64, hash: Digest, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let Some(v) = self.view.as_ref() else { return };
        let Some(block) = self.blocks.get(&hash) else { return };
        if block.slot != v.slot || v.validated.contains(&hash) || v.pending.contains(&hash) {
            return;
        }
        if self.ctx.protocol == Protocol::Posn && block.parent_hash == v.parent_hash {
            if let Some(deadline) = self.tie_wait_deadline(block, v, replay) {
                if now < deadline {
                    let (slot, epoch) = (v.slot, v.epoch);
                    let v = self.view.as_mut().expect("view");
                    v.pending.push(hash);
                    if !v.pending_timer {
                        v.pending_timer = true;
                        out.push(Output::Timer {
                            at_ms: deadline,
                            timer: Timer {
                                slot,
                                epoch,
                                kind: TimerKind::PendingCheck,
                            },
                        });
                    }
                    return;
                }
            }
        }
        self.judge(now, hash, replay, out);
    }

    /// When the block claims a tied first spike and some tied reveal is
    /// still missing, the time until which validation should wait.
    fn tie_wait_deadline(&self, block: &Block, v: &SlotView, replay: &mut ReplayCache) -> Option<u64> {
        let steps = replay.fire_steps(&block.parent_hash, block.slot, &block.txs);
        let (min, tie) = earliest(&steps)?;
        if tie.len() < 2 || block.claimed_fire_step != min || !tie.contains(&block.proposer) {
            return None;
        }
        let known = self.reveals.get(&(block.slot, block.parent_hash));
        let missing = tie
            .iter()
            .any(|t| *t != block.proposer && !known.is_some_and(|k| k.contains_key(t)));
        missing.then(|| self.spike_time(v.start_ms, min) + self.cfg().delta_net_ms + 1)
    }

    fn recheck_pending(&mut self, now: u64, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let Some(v) = self.view.as_ref() else { return };
        let ready: Vec<Digest> = v
            .pending
            .iter()
            .copied()
            .filter(|h| {
                self.blocks
                    .get(h)
                    .is_some_and(|b| self.tie_wait_deadline(b, v, replay).is_none())
            })
            .collect();
        if ready.is_empty() {
            return;
        }
        if let Some(v) = self.view.as_mut() {
            v.pending.retain(|h| !ready.contains(h));
        }
        for h in ready {
            self.judge(now, h, replay, out);
        }
    }

    fn judge(&mut self, now: u64, hash: Digest, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        let Some(block) = self.blocks.get(&hash).cloned() else { return };
        let Some(v) = self.view.as_ref() else { return };
        if block.slot != v.slot || v.validated.contains(&hash) {
            return;
        }
        let key = (v.slot, v.parent_hash);
        let empty = BTreeMap::new();
        let reveals = self.reveals.get(&key).unwrap_or(&empty);
        let view = LocalView {
            slot: v.slot,
            parent_hash: v.parent_hash,
            mempool: &v.txs,
            reveals,
        };
        let verdict = match self.ctx.protocol {
            Protocol::Posn => validate_proposal(&block, &view, self.cfg(), &self.ctx.validators, &self.ctx.registry, replay),
            Protocol::Pob => self.validate_pob(&block, &view),
            Protocol::Por => self.validate_por(&block, &view),
        };
        let deadline = self.vote_deadline(v);
        let v = self.view.as_mut().expect("view");
        v.validated.insert(hash);
        v.advance(SlotPhase::Validation);
        match verdict {
            Verdict::Accept(_) => {
                if !v.voted && now < deadline && !v.phase.is_terminal() {
                    v.voted = true;
                    v.advance(SlotPhase::Voting);
                    let vote = Vote::new_signed(block.slot, hash, self.id, &self.keys);
                    out.push(Output::Broadcast(Message::Vote(vote.clone())));
                    self.votes.entry(hash).or_default().insert(self.id, vote);
                    self.try_finalize(now, replay, out);
                }
            }
            Verdict::Reject(reason) => {
                self.observations.push(Observation::Rejected {
                    slot: block.slot,
                    proposer: block.proposer,
                    block_hash: hash,
                    reason,
                });
                // A local-view mismatch can hide a forgery visible from
                // the block alone.
                let forged = self.ctx.protocol == Protocol::Posn
                    && (reason.is_forgery()
                        || replay_forgery(&block, self.cfg(), &self.ctx.validators, &self.ctx.registry, replay).is_some());
                if forged {
                    self.penalize(Evidence::ForgedSpike { block }, replay);
                }
            }
        }
    }

    fn validate_common(&self, block: &Block, view: &LocalView<'_>) -> Option<RejectReason> {
        if !block.verify_signature(&self.ctx.validators, &self.ctx.registry) {
            return Some(RejectReason::BadSignature);
        }
        if !block.txs.iter().all(|tx| tx.verify(&self.ctx.registry)) {
            return Some(RejectReason::BadTxSignature);
        }
        if block.slot != view.slot {
            return Some(RejectReason::WrongSlot);
        }
        if block.parent_hash != view.parent_hash {
            return Some(RejectReason::ParentMismatch);
        }
        if block.claimed_fire_step != 0 {
            return Some(RejectReason::FireStepOutOfRange);
        }
        None
    }

    fn validate_txs(&self, block: &Block, view: &LocalView<'_>, leader: ValidatorId) -> Verdict {
        if block.txs != view.mempool {
            return Verdict::Reject(RejectReason::TxSetMismatch);
        }
        Verdict::Accept(ElectionResult {
            leader,
            fire_step: 0,
            tie_set: vec![leader],
            vrf_used: block.vrf_output.is_some(),
        })
    }

    fn validate_pob(&self, block: &Block, view: &LocalView<'_>) -> Verdict {
        if let Some(r) = self.validate_common(block, view) {
            return Verdict::Reject(r);
        }
        let leader = pob_elect(block.slot, &self.scores, &pob_seed(block.slot, &block.parent_hash)).expect("uniform scores");
        if leader != block.proposer {
            return Verdict::Reject(RejectReason::NotElected { tie_lost: false });
        }
        if block.vrf_output.is_some() {
            return Verdict::Reject(RejectReason::UnexpectedVrf);
        }
        self.validate_txs(block, view, leader)
    }

    fn validate_por(&self, block: &Block, view: &LocalView<'_>) -> Verdict {
        if let Some(r) = self.validate_common(block, view) {
            return Verdict::Reject(r);
        }
        let Some(own) = &block.vrf_output else {
            return Verdict::Reject(RejectReason::VrfMissing);
        };
        let pk = self.ctx.validators.pk(block.proposer).expect("signature verified");
        if !self
            .ctx
            .registry
            .vrf_verify(pk, &vrf_input(block.slot, &block.parent_hash), own)
        {
            return Verdict::Reject(RejectReason::VrfInvalid);
        }
        if view
            .reveals
            .iter()
            .any(|(id, r)| *id != block.proposer && r.value < own.value)
        {
            return Verdict::Reject(RejectReason::NotElected { tie_lost: true });
        }
        self.validate_txs(block, view, block.proposer)
    }

    fn penalize(&mut self, evidence: Evidence, replay: &mut ReplayCache) {
        let key = (evidence.offender(), evidence.slot(), evidence.reason());
        if self.penalized.contains(&key) {
            return;
        }
        let applied = apply_penalty(
            &mut self.chain,
            &evidence,
            &self.ctx.cfg,
            &self.ctx.validators,
            &self.ctx.registry,
            replay,
        );
        if let Ok(events) = applied {
            self.penalized.insert(key);
            self.observations.push(Observation::Penalized {
                offender: key.0,
                slot: key.1,
                reason: key.2,
                amount: events[0].amount.unsigned_abs(),
            });
        }
    }

    /// Appends every known block whose quorum is complete and which extends
    /// the tip, including blocks from earlier slots that finished late.
    fn try_finalize(&mut self, now: u64, replay: &mut ReplayCache, out: &mut Vec<Output>) {
        loop {
            let tip = self.chain.tip_hash();
            let tip_slot = self.chain.tip_slot();
            let current = self.current_slot();
            let mut candidates: Vec<(SlotId, Digest)> = self
                .blocks
                .iter()
                .filter(|(_, b)| {
                    b.parent_hash == tip
                        && tip_slot.is_none_or(|t| b.slot > t)
                        && current.is_none_or(|c| b.slot <= c)
                })
                .map(|(h, b)| (b.slot, *h))
                .collect();
            candidates.sort();
            let mut done = None;
            for (_, h) in candidates {
                let Some(votes) = self.votes.get(&h) else { continue };
                let (ok, quorum) = collect_votes(votes.values(), &h, &self.ctx.validators, &self.ctx.registry);
                if ok {
                    done = Some((h, quorum));
                    break;
                }
            }
            let Some((hash, quorum)) = done else { return };
            let block = self.blocks[&hash].clone();
            let Ok(events) = self
                .chain
                .append(block.clone(), &quorum, &self.ctx.validators, &self.ctx.registry, &self.ctx.cfg)
            else {
                self.blocks.remove(&hash);
                continue;
            };
            let (fire_step, tie_size) = match self.ctx.protocol {
                Protocol::Posn => {
                    let steps = replay.fire_steps(&block.parent_hash, block.slot, &block.txs);
                    let tie = earliest(&steps).map_or(0, |(_, t)| t.len());
                    (block.claimed_fire_step, tie)
                }
                _ => (0, 1),
            };
            for tx in &block.txs {
                self.mempool.remove(&tx.id);
            }
            self.observations.push(Observation::Finalized(Finalization {
                slot: block.slot,
                block_hash: hash,
                proposer: block.proposer,
                fire_step,
                tie_size,
                vrf_used: block.vrf_output.is_some(),
                quorum_size: quorum.len(),
                tx_ids: block.txs.iter().map(|t| t.id).collect(),
                at_ms: now,
                rewards_minted: events.iter().map(|e| e.amount).sum(),
            }));
            let fin_slot = block.slot;
            self.votes.retain(|_, vs| vs.values().any(|v| v.slot > fin_slot));
            self.blocks.retain(|_, b| b.slot > fin_slot);
            let reprepare = match self.view.as_mut() {
                Some(v) if v.slot == fin_slot => {
                    v.advance(SlotPhase::Finalized);
                    false
                }
                Some(v) => v.slot > fin_slot && !v.phase.is_terminal(),
                None => false,
            };
            if reprepare {
                self.prepare(now, replay, out);
            }
        }
    }

    /// Byzantine helper: a block for the current slot falsely claiming a
    /// spike at step 0. Returns `None` when that claim would be true, in
    /// which case the honest path runs. Marks the slot as proposed so the
    /// honest path stays quiet.
    pub fn forge_proposal(&mut self) -> Option<Block> {
        let v = self.view.as_mut()?;
        if v.proposed || self.ctx.protocol != Protocol::Posn {
            return None;
        }
        if v.fire.get(self.id.index()).copied().flatten() == Some(0) {
            return None;
        }
        let block = Block::unsigned(v.slot, self.id, v.parent_hash, v.txs.clone(), 0, None).sign(&self.keys);
        v.proposed = true;
        self.first_proposal.insert((block.proposer, block.slot), block.clone());
        self.blocks.insert(block.hash(), block.clone());
        Some(block)
    }

    /// Byzantine helper: a second, conflicting signed proposal.
    pub fn conflicting_variant(&self, block: &Block) -> Block {
        let mut b = block.clone();
        if b.txs.pop().is_none() {
            b.claimed_fire_step = (b.claimed_fire_step + 1) % self.cfg().tau_steps;
        }
        b.sign(&self.keys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_names_round_trip() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert!("pow".parse::<Protocol>().is_err());
    }

    #[test]
    fn default_slot_lengths_order_baselines_last() {
        let cfg = Config::default();
        assert_eq!(Protocol::Posn.slot_len_ms(&cfg), 200);
        assert_eq!(Protocol::Por.slot_len_ms(&cfg), 250);
        assert_eq!(Protocol::Pob.slot_len_ms(&cfg), 300);
    }
}
