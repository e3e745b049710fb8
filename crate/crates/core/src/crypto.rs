//! Simulated signatures and VRF built from a secret-keyed digest.
//!
//! These primitives are deterministic, verifiable, and uniform under a
//! keyed-hash model. They provide no real-world security. Verification needs
//! the verification material held by a [`KeyRegistry`], which stands in for a
//! public-key infrastructure: it can check tags for any registered public
//! key but never hands out secret keys, so code holding only the registry
//! cannot produce a verifying signature or VRF output.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{hex32, Encoder};

pub type PublicKey = [u8; 32];

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "hex32")] pub [u8; 32]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", &hex::encode(self.0)[..12])
    }
}

/// Never serialized; `Debug` is redacted.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretKey([u8; 32]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub pk: PublicKey,
    sk: SecretKey,
}

impl KeyPair {
    pub fn from_secret(sk: [u8; 32]) -> Self {
        let sk = SecretKey(sk);
        Self {
            pk: public_key_of(&sk),
            sk,
        }
    }

    pub fn secret(&self) -> &SecretKey {
        &self.sk
    }
}

/// Pseudo-random VRF value together with its proof tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VrfOutput {
    #[serde(with = "hex32")]
    pub value: [u8; 32],
    #[serde(with = "hex32")]
    pub proof: [u8; 32],
}

fn public_key_of(sk: &SecretKey) -> PublicKey {
    let mut e = Encoder::tagged("posn/pk");
    e.fixed(&sk.0);
    e.digest()
}

/// Deterministic key pair for `(seed, index)`.
pub fn keygen(seed: u64, index: u64) -> KeyPair {
    let mut e = Encoder::tagged("posn/sk");
    e.u64(seed).u64(index);
    KeyPair::from_secret(e.digest())
}

pub fn sign(sk: &SecretKey, msg: &[u8]) -> Signature {
    let mut e = Encoder::tagged("posn/sig");
    e.fixed(&sk.0).bytes(msg);
    Signature(e.digest())
}

fn vrf_value(sk: &SecretKey, input: &[u8]) -> [u8; 32] {
    let mut e = Encoder::tagged("posn/vrf-value");
    e.fixed(&sk.0).bytes(input);
    e.digest()
}

fn vrf_proof(sk: &SecretKey, input: &[u8], value: &[u8; 32]) -> [u8; 32] {
    let mut e = Encoder::tagged("posn/vrf-proof");
    e.fixed(&sk.0).bytes(input).fixed(value);
    e.digest()
}

pub fn vrf_eval(sk: &SecretKey, input: &[u8]) -> VrfOutput {
    let value = vrf_value(sk, input);
    VrfOutput {
        value,
        proof: vrf_proof(sk, input, &value),
    }
}

/// Verification oracle for every registered identity.
#[derive(Clone, Default)]
pub struct KeyRegistry {
    material: HashMap<PublicKey, SecretKey>,
}

impl fmt::Debug for KeyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRegistry")
            .field("keys", &self.material.len())
            .finish()
    }
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, kp: &KeyPair) {
        self.material.insert(kp.pk, kp.sk);
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.material.contains_key(pk)
    }

    pub fn len(&self) -> usize {
        self.material.len()
    }

    pub fn is_empty(&self) -> bool {
        self.material.is_empty()
    }

    pub fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        self.material
            .get(pk)
            .is_some_and(|sk| sign(sk, msg) == *sig)
    }

    pub fn vrf_verify(&self, pk: &PublicKey, input: &[u8], out: &VrfOutput) -> bool {
        let Some(sk) = self.material.get(pk) else {
            return false;
        };
        let value = vrf_value(sk, input);
        value == out.value && vrf_proof(sk, input, &value) == out.proof
    }
}
