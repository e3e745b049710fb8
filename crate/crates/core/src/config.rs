use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How transactions are turned into spike trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    #[default]
    Rate,
    Temporal,
    /// Rate and temporal currents summed.
    Both,
}

/// What happens to penalty amounts taken from an offender.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    #[default]
    Burn,
    /// Split equally among the other validators; the indivisible remainder
    /// is burned.
    Redistribute,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("n_validators = {n} cannot tolerate f_max = {f} (need n >= 3f + 1)")]
    TooFewValidators { n: usize, f: usize },
    #[error("parameter `{0}` is out of range")]
    OutOfRange(&'static str),
    #[error("r_max * dt = {0} must stay below 1 for the Bernoulli approximation")]
    RateTooHigh(f64),
}

/// Protocol and simulation parameters shared by every module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub n_validators: usize,
    pub f_max: usize,
    /// Micro-steps per slot election window.
    pub tau_steps: u32,
    /// Micro-step length in ms.
    pub dt: f64,
    /// Leak constant, 1/ms.
    pub lambda: f64,
    pub theta: f64,
    pub v_reset: f64,
    pub kappa: f64,
    pub epsilon_isi: f64,
    /// Firing-rate band for rate coding, spikes/ms.
    pub r_min: f64,
    pub r_max: f64,
    /// Saturation constants of the normalized value and fee features.
    pub c_value: f64,
    pub c_fee: f64,
    pub embedding_dim: usize,
    pub encoding: EncodingMode,
    pub max_block_txs: usize,
    pub r_base: u64,
    pub r_vote: u64,
    pub penalty_equivocation: u64,
    pub penalty_forged_spike: u64,
    pub penalty_mode: PenaltyMode,
    pub delta_net_ms: u64,
    pub gst_ms: u64,
    /// Extra scoring round of the PoB baseline; defaults to 2 * delta.
    pub pob_overhead_ms: Option<u64>,
    /// Extra beacon round of the PoR baseline; defaults to delta.
    pub por_overhead_ms: Option<u64>,
    pub master_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            n_validators: 4,
            f_max: 1,
            tau_steps: 100,
            dt: 1.0,
            lambda: 0.1,
            theta: 1.0,
            v_reset: 0.0,
            kappa: 10.0,
            epsilon_isi: 0.001,
            r_min: 0.002,
            r_max: 0.02,
            c_value: 1000.0,
            c_fee: 1000.0,
            embedding_dim: 8,
            encoding: EncodingMode::Rate,
            max_block_txs: 64,
            r_base: 100,
            r_vote: 10,
            penalty_equivocation: 500,
            penalty_forged_spike: 500,
            penalty_mode: PenaltyMode::Burn,
            delta_net_ms: 50,
            gst_ms: 0,
            pob_overhead_ms: None,
            por_overhead_ms: None,
            master_seed: 0,
        }
    }
}

impl Config {
    /// Default parameters for `n` validators tolerating the largest
    /// admissible `f = (n - 1) / 3`.
    pub fn with_validators(n: usize) -> Self {
        Self {
            n_validators: n,
            f_max: max_faults(n),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_validators == 0 {
            return Err(ConfigError::OutOfRange("n_validators"));
        }
        if self.n_validators < 3 * self.f_max + 1 {
            return Err(ConfigError::TooFewValidators {
                n: self.n_validators,
                f: self.f_max,
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.lambda) {
            return Err(ConfigError::OutOfRange("lambda"));
        }
        if !positive(self.dt) {
            return Err(ConfigError::OutOfRange("dt"));
        }
        if !(self.theta.is_finite() && self.v_reset.is_finite() && self.theta > self.v_reset) {
            return Err(ConfigError::OutOfRange("theta"));
        }
        if self.tau_steps == 0 {
            return Err(ConfigError::OutOfRange("tau_steps"));
        }
        if !positive(self.kappa) {
            return Err(ConfigError::OutOfRange("kappa"));
        }
        if !positive(self.epsilon_isi) {
            return Err(ConfigError::OutOfRange("epsilon_isi"));
        }
        if !(self.r_min.is_finite() && self.r_min >= 0.0 && self.r_max > self.r_min) {
            return Err(ConfigError::OutOfRange("r_min/r_max"));
        }
        if self.r_max * self.dt >= 1.0 {
            return Err(ConfigError::RateTooHigh(self.r_max * self.dt));
        }
        if !positive(self.c_value) || !positive(self.c_fee) {
            return Err(ConfigError::OutOfRange("c_value/c_fee"));
        }
        if self.embedding_dim < 2 {
            return Err(ConfigError::OutOfRange("embedding_dim"));
        }
        if self.delta_net_ms == 0 {
            return Err(ConfigError::OutOfRange("delta_net_ms"));
        }
        Ok(())
    }

    /// Election window length in whole ms.
    pub fn window_ms(&self) -> u64 {
        (f64::from(self.tau_steps) * self.dt).ceil() as u64
    }

    pub fn pob_overhead(&self) -> u64 {
        self.pob_overhead_ms.unwrap_or(2 * self.delta_net_ms)
    }

    pub fn por_overhead(&self) -> u64 {
        self.por_overhead_ms.unwrap_or(self.delta_net_ms)
    }
}

/// Largest `f` with `n >= 3f + 1`.
pub fn max_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}
