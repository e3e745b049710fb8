use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPhase {
    Encoding,
    Spiking,
    Proposal,
    Validation,
    Voting,
    Finalized,
    Skipped,
}

impl SlotPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, SlotPhase::Finalized | SlotPhase::Skipped)
    }

    /// Forward moves along the slot workflow. `Skipped` is reachable from any
    /// live phase; a quorum seen early may finalize straight from
    /// `Proposal` or `Validation`.
    pub fn can_advance_to(self, next: SlotPhase) -> bool {
        use SlotPhase::*;
        if self.is_terminal() {
            return false;
        }
        match next {
            Skipped => true,
            Finalized => matches!(self, Proposal | Validation | Voting),
            _ => next > self,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::SlotPhase::*;

    #[test]
    fn workflow_order() {
        let path = [Encoding, Spiking, Proposal, Validation, Voting, Finalized];
        for w in path.windows(2) {
            assert!(w[0].can_advance_to(w[1]), "{:?} -> {:?}", w[0], w[1]);
        }
        assert!(!Voting.can_advance_to(Spiking));
        assert!(!Encoding.can_advance_to(Finalized));
        assert!(!Finalized.can_advance_to(Skipped));
        for p in [Encoding, Spiking, Proposal, Validation, Voting] {
            assert!(p.can_advance_to(Skipped));
        }
    }
}
