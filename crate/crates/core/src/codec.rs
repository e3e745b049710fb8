//! Canonical binary encoding used for hashing and signing.
//!
//! Every integer is little-endian and fixed width. Byte strings and sequences
//! carry a `u32` length prefix, so concatenated fields can never alias.

use sha2::{Digest as _, Sha256};

/// 32-byte digest used for block hashes, ids, and seeds.
pub type Digest = [u8; 32];

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts an encoding with a domain separation tag.
    pub fn tagged(tag: &str) -> Self {
        let mut enc = Self::new();
        enc.bytes(tag.as_bytes());
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn fixed(&mut self, v: &[u8; 32]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(u32::try_from(v.len()).expect("field longer than u32::MAX"));
        self.buf.extend_from_slice(v);
        self
    }

    /// Sequence count prefix; the caller encodes the elements.
    pub fn len_prefix(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("sequence longer than u32::MAX"))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn digest(&self) -> Digest {
        sha256(&self.buf)
    }
}

pub fn sha256(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

/// Serde adapter rendering `[u8; 32]` as lowercase hex.
pub mod hex32 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(&s).map_err(D::Error::custom)?;
        raw.try_into()
            .map_err(|_| D::Error::custom("expected 32 bytes of hex"))
    }
}
