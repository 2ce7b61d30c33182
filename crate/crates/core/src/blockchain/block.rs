use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::crypto::{sign, verify, NodeKeys};
use super::{BlockError, Hash32, NodeId, Transaction, ZERO_HASH};
use crate::nonce::{nonce_matches_prediction, NonceCandidate};
use crate::regressors::ModelKind;

/// Byte length of one encoded transaction.
pub const TX_ENCODED_LEN: usize = 56;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignedPayload {
    pub txs: Vec<Transaction>,
    pub signer_id: NodeId,
    #[serde(with = "super::hex_sig")]
    pub signature: [u8; 64],
}

impl SignedPayload {
    pub fn new(txs: Vec<Transaction>, signer_id: NodeId, keys: &NodeKeys) -> Self {
        let signature = sign(&encode_signed_content(&txs, signer_id), keys);
        Self {
            txs,
            signer_id,
            signature,
        }
    }

    pub fn verify(&self, key: &ed25519_dalek::VerifyingKey) -> bool {
        verify(&encode_signed_content(&self.txs, self.signer_id), &self.signature, key)
    }
}

/// A ledger block. The nonce's provenance is kept as the prediction it was
/// derived from and the model kind that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub index: u64,
    #[serde(with = "super::hex_hash")]
    pub prev_hash: Hash32,
    pub timestamp_ms: u64,
    pub nonce: u64,
    pub prediction_mbps: f64,
    pub model_kind: ModelKind,
    pub payload: SignedPayload,
    #[serde(with = "super::hex_hash")]
    pub block_hash: Hash32,
}

impl Block {
    pub fn genesis(master: NodeId, keys: &NodeKeys, model_kind: ModelKind) -> Self {
        let payload = SignedPayload::new(Vec::new(), master, keys);
        let block_hash = hash_block_fields(0, &encode_payload_bytes(&payload), &ZERO_HASH, 0);
        Self {
            index: 0,
            prev_hash: ZERO_HASH,
            timestamp_ms: 0,
            nonce: 0,
            prediction_mbps: 0.0,
            model_kind,
            payload,
            block_hash,
        }
    }

    pub fn recompute_hash(&self) -> Hash32 {
        hash_block_fields(
            self.nonce,
            &encode_payload_bytes(&self.payload),
            &self.prev_hash,
            self.timestamp_ms,
        )
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.block_hash)
    }
}

pub fn encode_transaction(tx: &Transaction, out: &mut Vec<u8>) {
    out.extend_from_slice(&tx.tx_id.to_le_bytes());
    out.extend_from_slice(&tx.producer_id.to_le_bytes());
    out.extend_from_slice(&tx.consumer_id.to_le_bytes());
    out.extend_from_slice(&tx.energy_kwh.to_bits().to_le_bytes());
    out.extend_from_slice(&tx.unit_price.to_bits().to_le_bytes());
    out.extend_from_slice(&tx.contract_id.to_le_bytes());
    out.extend_from_slice(&tx.created_at_ms.to_le_bytes());
}

/// The bytes covered by the signature: signer id, transaction count, then
/// each transaction.
pub fn encode_signed_content(txs: &[Transaction], signer_id: NodeId) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + TX_ENCODED_LEN * txs.len());
    out.extend_from_slice(&signer_id.0.to_le_bytes());
    out.extend_from_slice(&(txs.len() as u64).to_le_bytes());
    for tx in txs {
        encode_transaction(tx, &mut out);
    }
    out
}

/// Signed content followed by the 64-byte signature.
pub fn encode_payload_bytes(payload: &SignedPayload) -> Vec<u8> {
    let mut out = encode_signed_content(&payload.txs, payload.signer_id);
    out.extend_from_slice(&payload.signature);
    out
}

/// SHA-256 over `nonce | len(payload) | payload | prev_hash | timestamp`,
/// integers as little-endian u64.
pub fn hash_block_fields(nonce: u64, payload_bytes: &[u8], prev_hash: &Hash32, timestamp_ms: u64) -> Hash32 {
    let mut h = Sha256::new();
    h.update(nonce.to_le_bytes());
    h.update((payload_bytes.len() as u64).to_le_bytes());
    h.update(payload_bytes);
    h.update(prev_hash);
    h.update(timestamp_ms.to_le_bytes());
    h.finalize().into()
}

pub fn build_candidate_block(
    txs: Vec<Transaction>,
    nonce: &NonceCandidate,
    prev: &Block,
    timestamp_ms: u64,
    signer: NodeId,
    keys: &NodeKeys,
) -> Result<Block, BlockError> {
    if timestamp_ms <= prev.timestamp_ms {
        return Err(BlockError::NonMonotonicTimestamp {
            prev: prev.timestamp_ms,
            found: timestamp_ms,
        });
    }
    if txs.is_empty() {
        return Err(BlockError::EmptyTransactions);
    }
    for tx in &txs {
        tx.validate().map_err(BlockError::InvalidTransaction)?;
    }
    let payload = SignedPayload::new(txs, signer, keys);
    let block_hash = hash_block_fields(nonce.nonce, &encode_payload_bytes(&payload), &prev.block_hash, timestamp_ms);
    Ok(Block {
        index: prev.index + 1,
        prev_hash: prev.block_hash,
        timestamp_ms,
        nonce: nonce.nonce,
        prediction_mbps: nonce.prediction_mbps,
        model_kind: nonce.model_kind,
        payload,
        block_hash,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    MissingGenesis,
    IndexDiscontinuity { expected: u64, found: u64 },
    PrevHashMismatch,
    NonMonotonicTimestamp { prev: u64, found: u64 },
    UnknownSigner { signer: NodeId },
    BadSignature,
    HashMismatch,
    DuplicateNonce { nonce: u64 },
    /// The nonce is neither encoding of the recorded prediction.
    NonceProvenance,
    /// Malformed genesis content or an empty non-genesis payload.
    BadPayload,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingGenesis => write!(f, "missing genesis"),
            Self::IndexDiscontinuity { expected, found } => write!(f, "index {found}, expected {expected}"),
            Self::PrevHashMismatch => write!(f, "prev_hash does not link to predecessor"),
            Self::NonMonotonicTimestamp { prev, found } => {
                write!(f, "timestamp {found} not after predecessor's {prev}")
            }
            Self::UnknownSigner { signer } => write!(f, "no public key for signer {signer}"),
            Self::BadSignature => write!(f, "payload signature invalid"),
            Self::HashMismatch => write!(f, "block_hash does not match contents"),
            Self::DuplicateNonce { nonce } => write!(f, "nonce {nonce:#018x} repeats predecessor's"),
            Self::NonceProvenance => write!(f, "nonce does not encode prediction_mbps"),
            Self::BadPayload => write!(f, "payload content invalid for this block"),
        }
    }
}

fn check_integrity(block: &Block, signer_key: &ed25519_dalek::VerifyingKey, out: &mut Vec<Violation>) {
    if !block.payload.verify(signer_key) {
        out.push(Violation::BadSignature);
    }
    if block.recompute_hash() != block.block_hash {
        out.push(Violation::HashMismatch);
    }
}

/// Checks `block` against its predecessor and returns every violation found.
pub fn validate_block(
    block: &Block,
    prev: &Block,
    signer_key: &ed25519_dalek::VerifyingKey,
) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if block.index != prev.index + 1 {
        v.push(Violation::IndexDiscontinuity {
            expected: prev.index + 1,
            found: block.index,
        });
    }
    if block.prev_hash != prev.block_hash {
        v.push(Violation::PrevHashMismatch);
    }
    if block.timestamp_ms <= prev.timestamp_ms {
        v.push(Violation::NonMonotonicTimestamp {
            prev: prev.timestamp_ms,
            found: block.timestamp_ms,
        });
    }
    check_integrity(block, signer_key, &mut v);
    if block.nonce == prev.nonce {
        v.push(Violation::DuplicateNonce { nonce: block.nonce });
    }
    if !nonce_matches_prediction(block.nonce, block.prediction_mbps) {
        v.push(Violation::NonceProvenance);
    }
    if block.payload.txs.is_empty() || block.payload.txs.iter().any(|t| t.validate().is_err()) {
        v.push(Violation::BadPayload);
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

pub fn validate_genesis(block: &Block, signer_key: &ed25519_dalek::VerifyingKey) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if block.index != 0 {
        v.push(Violation::IndexDiscontinuity {
            expected: 0,
            found: block.index,
        });
    }
    if block.prev_hash != ZERO_HASH {
        v.push(Violation::PrevHashMismatch);
    }
    if block.timestamp_ms != 0 {
        v.push(Violation::NonMonotonicTimestamp {
            prev: 0,
            found: block.timestamp_ms,
        });
    }
    check_integrity(block, signer_key, &mut v);
    if block.nonce != 0 || block.prediction_mbps.to_bits() != 0 {
        v.push(Violation::NonceProvenance);
    }
    if !block.payload.txs.is_empty() {
        v.push(Violation::BadPayload);
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
