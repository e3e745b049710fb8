use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::consensus::node::{Input, Message, Node, Output};
use crate::types::{Block, ValidatorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every outbound message is held until the end of the sender's slot.
    DelayMax,
    /// Proposals and votes are dropped.
    Withhold,
    /// As leader, one half of the peers gets the block and the other half a
    /// conflicting signed variant.
    Equivocate,
    /// Proposes at slot start claiming a spike at step 0.
    ForgeSpike,
    /// Emits nothing.
    Silent,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::DelayMax,
        Strategy::Withhold,
        Strategy::Equivocate,
        Strategy::ForgeSpike,
        Strategy::Silent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DelayMax => "delay_max",
            Strategy::Withhold => "withhold",
            Strategy::Equivocate => "equivocate",
            Strategy::ForgeSpike => "forge_spike",
            Strategy::Silent => "silent",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub validator: ValidatorId,
    pub strategy: Strategy,
}

/// Messages between `side` and the remaining validators are held for
/// `[start_ms, end_ms)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub start_ms: u64,
    pub end_ms: u64,
    pub side: BTreeSet<ValidatorId>,
}

impl Partition {
    pub fn separates(&self, a: ValidatorId, b: ValidatorId) -> bool {
        self.side.contains(&a) != self.side.contains(&b)
    }

    pub fn active_at(&self, t: u64) -> bool {
        (self.start_ms..self.end_ms).contains(&t)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultPlan {
    pub byzantine: Vec<Assignment>,
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("{count} Byzantine validators exceed f_max = {f_max}")]
    TooManyByzantine { count: usize, f_max: usize },
    #[error("{0} is not a validator")]
    UnknownValidator(ValidatorId),
    #[error("{0} is assigned more than one strategy")]
    DuplicateAssignment(ValidatorId),
    #[error("partition ends before it starts")]
    EmptyPartition,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    /// The first `count` validators all running `strategy`.
    pub fn uniform(strategy: Strategy, count: usize) -> Self {
        Self {
            byzantine: (0..count as u32)
                .map(|i| Assignment {
                    validator: ValidatorId(i),
                    strategy,
                })
                .collect(),
            partitions: Vec::new(),
        }
    }

    pub fn strategy_of(&self, v: ValidatorId) -> Option<Strategy> {
        self.byzantine.iter().find(|a| a.validator == v).map(|a| a.strategy)
    }

    pub fn is_honest(&self, v: ValidatorId) -> bool {
        self.strategy_of(v).is_none()
    }

    pub fn validate(&self, cfg: &Config) -> Result<(), PlanError> {
        if self.byzantine.len() > cfg.f_max {
            return Err(PlanError::TooManyByzantine {
                count: self.byzantine.len(),
                f_max: cfg.f_max,
            });
        }
        let mut seen = BTreeSet::new();
        for a in &self.byzantine {
            if a.validator.index() >= cfg.n_validators {
                return Err(PlanError::UnknownValidator(a.validator));
            }
            if !seen.insert(a.validator) {
                return Err(PlanError::DuplicateAssignment(a.validator));
            }
        }
        for p in &self.partitions {
            if p.end_ms < p.start_ms {
                return Err(PlanError::EmptyPartition);
            }
            if let Some(v) = p.side.iter().find(|v| v.index() >= cfg.n_validators) {
                return Err(PlanError::UnknownValidator(*v));
            }
        }
        Ok(())
    }

    /// Release time for a validator-to-validator message sent at `t`:
    /// `t` itself, or the end of every partition that separates the pair.
    pub fn partition_release(&self, t: u64, from: ValidatorId, to: ValidatorId) -> u64 {
        let mut at = t;
        loop {
            let hold = self
                .partitions
                .iter()
                .filter(|p| p.active_at(at) && p.separates(from, to))
                .map(|p| p.end_ms)
                .max();
            match hold {
                Some(end) if end > at => at = end,
                _ => return at,
            }
        }
    }
}

/// An output after the Byzantine filter, with an optional earliest send time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emission {
    pub output: Output,
    pub not_before_ms: Option<u64>,
}

impl Emission {
    fn now(output: Output) -> Self {
        Self {
            output,
            not_before_ms: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct StrategyOutput {
    pub emissions: Vec<Emission>,
    /// Block fabricated by a ForgeSpike node during this step.
    pub forged: Option<Block>,
}

fn is_network(o: &Output) -> bool {
    !matches!(o, Output::Timer { .. })
}

fn message_of(o: &Output) -> Option<&Message> {
    match o {
        Output::Broadcast(m) | Output::Send { msg: m, .. } => Some(m),
        Output::Timer { .. } => None,
    }
}

/// Rewrites one Byzantine node's step outputs according to its strategy.
/// `input` is what the node just processed; `n` is the validator count.
pub fn apply_strategy(strategy: Strategy, node: &mut Node, input: &Input, outputs: Vec<Output>, n: usize) -> StrategyOutput {
    let mut result = StrategyOutput::default();
    match strategy {
        Strategy::Silent => {
            result.emissions = outputs.into_iter().filter(|o| !is_network(o)).map(Emission::now).collect();
        }
        Strategy::Withhold => {
            result.emissions = outputs
                .into_iter()
                .filter(|o| !matches!(message_of(o), Some(Message::Proposal(_) | Message::Vote(_))))
                .map(Emission::now)
                .collect();
        }
        Strategy::DelayMax => {
            let until = node.slot_end_ms();
            result.emissions = outputs
                .into_iter()
                .map(|o| Emission {
                    not_before_ms: if is_network(&o) { until } else { None },
                    output: o,
                })
                .collect();
        }
        Strategy::Equivocate => {
            let me = node.id();
            for o in outputs {
                match o {
                    Output::Broadcast(Message::Proposal(a)) if a.proposer == me => {
                        let b = node.conflicting_variant(&a);
                        let peers: Vec<ValidatorId> = (0..n as u32).map(ValidatorId).filter(|&v| v != me).collect();
                        let half = peers.len().div_ceil(2);
                        for (i, to) in peers.into_iter().enumerate() {
                            let block = if i < half { a.clone() } else { b.clone() };
                            result.emissions.push(Emission::now(Output::Send {
                                to,
                                msg: Message::Proposal(block),
                            }));
                        }
                    }
                    other => result.emissions.push(Emission::now(other)),
                }
            }
        }
        Strategy::ForgeSpike => {
            if matches!(input, Input::SlotStart(_)) {
                if let Some(b) = node.forge_proposal() {
                    result
                        .emissions
                        .push(Emission::now(Output::Broadcast(Message::Proposal(b.clone()))));
                    result.forged = Some(b);
                }
            }
            result.emissions.extend(outputs.into_iter().map(Emission::now));
        }
    }
    result
}
