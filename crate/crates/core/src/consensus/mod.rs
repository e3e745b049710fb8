//! Per-slot election, validation, voting and ledger accounting.

pub mod election;
pub mod node;
pub mod phase;
pub mod rewards;
pub mod validation;
pub mod votes;

pub use election::{elect_leader, vrf_input, ElectionResult, ReplayCache};
pub use node::{Message, MessageKind, Node, NodeContext, Observation, Output, Peer, Protocol};
pub use phase::SlotPhase;
pub use rewards::{apply_penalty, distribute_rewards, replay_contradicts, replay_forgery, Evidence, PenaltyError, RewardEvent, RewardKind};
pub use validation::{propose, validate_proposal, LocalView, ProposeError, RejectReason, Verdict};
pub use votes::{collect_votes, dedup_votes, quorum_threshold};
