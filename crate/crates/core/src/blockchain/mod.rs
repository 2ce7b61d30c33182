//! Hash-chained ledger of signed energy-trading transactions.
//!
//! Block hashes are SHA-256 over a fixed little-endian preimage; see
//! `docs/ledger-format.md` for the byte layout. Payloads are signed with
//! Ed25519 by the mining base station.

mod block;
mod crypto;
mod ledger;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use block::{
    build_candidate_block, encode_payload_bytes, encode_signed_content, encode_transaction,
    hash_block_fields, validate_block, validate_genesis, Block, SignedPayload, Violation,
};
pub use crypto::{keygen, sign, verify, verify_raw, CryptoError, KeyRegistry, NodeKeys};
pub use ledger::{audit_jsonl, verify_chain, AuditFailure, ChainViolation, Ledger, LedgerParseError};

pub type Hash32 = [u8; 32];
pub const ZERO_HASH: Hash32 = [0; 32];

/// Base-station identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("timestamp {found} is not after previous block's {prev}")]
    NonMonotonicTimestamp { prev: u64, found: u64 },
    #[error("transaction list is empty")]
    EmptyTransactions,
    #[error("invalid transaction: {0}")]
    InvalidTransaction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityClass {
    Critical,
    Normal,
}

/// Producer/consumer price agreement that every trading request must cite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartEnergyContract {
    pub contract_id: u64,
    pub producer_id: u32,
    pub consumer_id: u32,
    pub unit_price: f64,
    #[serde(default)]
    pub disaster_mode: bool,
    #[serde(default = "default_priority")]
    pub priority_class: PriorityClass,
}

fn default_priority() -> PriorityClass {
    PriorityClass::Normal
}

impl SmartEnergyContract {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.unit_price.is_finite() && self.unit_price >= 0.0) {
            return Err(format!("unit_price {} must be finite and >= 0", self.unit_price));
        }
        if self.producer_id == self.consumer_id {
            return Err("producer_id equals consumer_id".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    #[serde(with = "hex_u128")]
    pub tx_id: u128,
    pub producer_id: u32,
    pub consumer_id: u32,
    pub energy_kwh: f64,
    pub unit_price: f64,
    pub contract_id: u64,
    pub created_at_ms: u64,
}

impl Transaction {
    pub fn total_price(&self) -> f64 {
        self.energy_kwh * self.unit_price
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.energy_kwh.is_finite() && self.energy_kwh > 0.0) {
            return Err(format!("energy_kwh {} must be > 0", self.energy_kwh));
        }
        if !(self.unit_price.is_finite() && self.unit_price >= 0.0) {
            return Err(format!("unit_price {} must be >= 0", self.unit_price));
        }
        if self.producer_id == self.consumer_id {
            return Err("producer_id equals consumer_id".into());
        }
        Ok(())
    }
}

/// Decodes 64 lowercase hex characters.
pub fn parse_hash(s: &str) -> Result<Hash32, String> {
    let bytes = parse_lower_hex(s)?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| format!("expected 32 bytes, got {}", b.len()))
}

pub(crate) fn parse_lower_hex(s: &str) -> Result<Vec<u8>, String> {
    if !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(format!("`{s}` is not lowercase hex"));
    }
    hex::decode(s).map_err(|e| e.to_string())
}

pub(crate) mod hex_u128 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:032x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 32 {
            return Err(D::Error::custom("tx_id must be 32 hex characters"));
        }
        let bytes = super::parse_lower_hex(&s).map_err(D::Error::custom)?;
        Ok(u128::from_be_bytes(bytes.try_into().expect("16 bytes")))
    }
}

pub(crate) mod hex_hash {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &super::Hash32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<super::Hash32, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_hash(&s).map_err(D::Error::custom)
    }
}

pub(crate) mod hex_sig {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = super::parse_lower_hex(&s).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map_err(|b: Vec<u8>| D::Error::custom(format!("signature must be 64 bytes, got {}", b.len())))
    }
}
