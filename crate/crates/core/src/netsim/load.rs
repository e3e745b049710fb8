use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Encoder;
use crate::crypto::{keygen, KeyPair};
use crate::rng::Stream;
use crate::types::Transaction;

/// Key index offset separating client accounts from validator keys.
pub const CLIENT_KEY_OFFSET: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntRange {
    pub min: u64,
    pub max: u64,
}

impl IntRange {
    pub fn sample(&self, s: &mut Stream) -> u64 {
        s.range_inclusive(self.min, self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadProfile {
    /// Poisson arrival rate in transactions per simulated second.
    pub arrival_rate: f64,
    pub value: IntRange,
    pub fee: IntRange,
    pub duration_ms: u64,
    pub clients: usize,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            arrival_rate: 100.0,
            value: IntRange { min: 1, max: 10_000 },
            fee: IntRange { min: 1, max: 1_000 },
            duration_ms: 10_000,
            clients: 16,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("arrival rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("{0} range has min above max")]
    BadRange(&'static str),
    #[error("at least one client is required")]
    NoClients,
}

/// A transaction and the time the client submitted it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arrival {
    pub submit_ms: u64,
    pub tx: Transaction,
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), LoadError> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(LoadError::BadRate(self.arrival_rate));
        }
        if self.value.min > self.value.max {
            return Err(LoadError::BadRange("value"));
        }
        if self.fee.min > self.fee.max {
            return Err(LoadError::BadRange("fee"));
        }
        if self.clients == 0 {
            return Err(LoadError::NoClients);
        }
        Ok(())
    }

    pub fn client_keys(&self, master_seed: u64) -> Vec<KeyPair> {
        (0..self.clients as u64)
            .map(|k| keygen(master_seed, CLIENT_KEY_OFFSET + k))
            .collect()
    }

    /// Poisson arrivals over `[0, duration_ms)`, signed by client keys.
    pub fn arrivals(&self, master_seed: u64, clients: &[KeyPair]) -> Vec<Arrival> {
        let mut out = Vec::new();
        if self.arrival_rate == 0.0 || clients.is_empty() {
            return out;
        }
        let per_ms = self.arrival_rate / 1000.0;
        let mut gaps = Stream::for_purpose(master_seed, "load/arrivals");
        let mut fields = Stream::for_purpose(master_seed, "load/fields");
        let mut t = 0.0;
        let mut index = 0u64;
        loop {
            t += gaps.exponential(per_ms);
            let submit_ms = t.floor() as u64;
            if submit_ms >= self.duration_ms {
                return out;
            }
            let mut id = Encoder::tagged("posn/tx-id");
            id.u64(master_seed).u64(index);
            let sender = &clients[fields.range_inclusive(0, clients.len() as u64 - 1) as usize];
            let receiver = clients[fields.range_inclusive(0, clients.len() as u64 - 1) as usize].pk;
            let value = self.value.sample(&mut fields);
            let fee = self.fee.sample(&mut fields);
            out.push(Arrival {
                submit_ms,
                tx: Transaction::new_signed(id.digest(), sender, receiver, value, fee),
            });
            index += 1;
        }
    }
}
