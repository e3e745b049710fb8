use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::faults::FaultPlan;
use super::load::LoadProfile;
use super::sim::{run, SimError};
use crate::config::Config;
use crate::consensus::Protocol;
use crate::metrics::runlog::RunLog;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
}

/// A complete run description, loadable from TOML.
///
/// `seed` and `duration_s`, when present, override `config.master_seed`
/// and `load.duration_ms`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub protocol: Protocol,
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub config: Config,
    pub load: LoadProfile,
    pub faults: FaultPlan,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Config and load with the overrides folded in.
    pub fn resolved(&self) -> (Config, LoadProfile) {
        let mut cfg = self.config.clone();
        let mut load = self.load.clone();
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(d) = self.duration_s {
            load.duration_ms = (d * 1000.0).round().max(0.0) as u64;
        }
        (cfg, load)
    }

    pub fn run(&self) -> Result<RunLog, SimError> {
        let (cfg, load) = self.resolved();
        run(&cfg, &self.faults, &load, self.protocol)
    }
}
