use serde::{Deserialize, Serialize};

use crate::config::Config;

/// Leaky integrate-and-fire neuron.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: f64,
    pub lambda: f64,
    pub theta: f64,
    pub v_reset: f64,
}

impl NeuronState {
    /// Neuron at rest, as at the start of every slot.
    pub fn at_rest(cfg: &Config) -> Self {
        Self {
            v: cfg.v_reset,
            lambda: cfg.lambda,
            theta: cfg.theta,
            v_reset: cfg.v_reset,
        }
    }

    pub fn reset(&mut self) {
        self.v = self.v_reset;
    }
}

/// One exact-decay micro-step: `v' = v * exp(-lambda * dt) + current`, with
/// the input applied as an impulse after the decay. Crossing `theta` emits a
/// spike and resets the potential.
pub fn lif_step(state: NeuronState, current: f64, dt: f64) -> (NeuronState, bool) {
    let mut next = state;
    next.v = state.v * (-state.lambda * dt).exp() + current;
    if next.v >= state.theta {
        next.v = state.v_reset;
        (next, true)
    } else {
        (next, false)
    }
}
