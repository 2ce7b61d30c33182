use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum CryptoError {
    #[error("public key must be 32 bytes, got {0}")]
    PublicKeyLength(usize),
    #[error("public key is not a valid curve point")]
    PublicKeyInvalid,
    #[error("signature must be 64 bytes, got {0}")]
    SignatureLength(usize),
}

#[derive(Debug, Clone)]
pub struct NodeKeys {
    signing: SigningKey,
}

impl NodeKeys {
    pub fn public(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.signing
    }
}

/// Deterministic Ed25519 key pair; the secret is SHA-256 of a domain tag
/// and the little-endian seed.
pub fn keygen(seed: u64) -> NodeKeys {
    let mut h = Sha256::new();
    h.update(b"poaml/node-key/v1");
    h.update(seed.to_le_bytes());
    let secret: [u8; 32] = h.finalize().into();
    NodeKeys {
        signing: SigningKey::from_bytes(&secret),
    }
}

pub fn sign(message: &[u8], key: &NodeKeys) -> [u8; 64] {
    key.signing.sign(message).to_bytes()
}

pub fn verify(message: &[u8], signature: &[u8; 64], key: &VerifyingKey) -> bool {
    key.verify(message, &Signature::from_bytes(signature)).is_ok()
}

/// Verification from raw byte strings, rejecting malformed lengths.
pub fn verify_raw(message: &[u8], signature: &[u8], public_key: &[u8]) -> Result<bool, CryptoError> {
    let pk: [u8; 32] = public_key
        .try_into()
        .map_err(|_| CryptoError::PublicKeyLength(public_key.len()))?;
    let sig: [u8; 64] = signature
        .try_into()
        .map_err(|_| CryptoError::SignatureLength(signature.len()))?;
    let key = VerifyingKey::from_bytes(&pk).map_err(|_| CryptoError::PublicKeyInvalid)?;
    Ok(verify(message, &sig, &key))
}

/// Public keys of every base station, persisted as `{"<node id>": "<hex>"}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyRegistry {
    keys: BTreeMap<NodeId, VerifyingKey>,
}

impl KeyRegistry {
    pub fn insert(&mut self, node: NodeId, key: VerifyingKey) {
        self.keys.insert(node, key);
    }

    pub fn get(&self, node: NodeId) -> Option<&VerifyingKey> {
        self.keys.get(&node)
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, String> = self
            .keys
            .iter()
            .map(|(id, k)| (id.0.to_string(), hex::encode(k.as_bytes())))
            .collect();
        serde_json::to_string_pretty(&map).expect("registry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let map: BTreeMap<String, String> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut reg = Self::default();
        for (id, hex_key) in map {
            let id: u32 = id.parse().map_err(|_| format!("bad node id `{id}`"))?;
            let bytes = hex::decode(&hex_key).map_err(|e| format!("node {id}: {e}"))?;
            let pk: [u8; 32] = bytes
                .try_into()
                .map_err(|b: Vec<u8>| CryptoError::PublicKeyLength(b.len()).to_string())?;
            let key = VerifyingKey::from_bytes(&pk).map_err(|_| CryptoError::PublicKeyInvalid.to_string())?;
            reg.insert(NodeId(id), key);
        }
        Ok(reg)
    }
}

impl Serialize for KeyRegistry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, String> = self
            .keys
            .iter()
            .map(|(id, k)| (id.0.to_string(), hex::encode(k.as_bytes())))
            .collect();
        map.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_round_trip() {
        let k = keygen(1);
        let sig = sign(b"payload", &k);
        assert!(verify(b"payload", &sig, &k.public()));
        assert_eq!(sig, sign(b"payload", &k), "signatures are deterministic");
    }

    #[test]
    fn flipped_byte_fails() {
        let k = keygen(1);
        let msg = b"energy 5 kWh".to_vec();
        let sig = sign(&msg, &k);
        for i in 0..msg.len() {
            let mut m = msg.clone();
            m[i] ^= 0x01;
            assert!(!verify(&m, &sig, &k.public()));
        }
    }

    #[test]
    fn other_key_fails() {
        let sig = sign(b"m", &keygen(1));
        assert!(!verify(b"m", &sig, &keygen(2).public()));
    }

    #[test]
    fn malformed_lengths() {
        let k = keygen(3);
        let sig = sign(b"m", &k);
        let pk = k.public().to_bytes();
        assert_eq!(verify_raw(b"m", &sig, &pk), Ok(true));
        assert_eq!(verify_raw(b"m", &sig[..63], &pk), Err(CryptoError::SignatureLength(63)));
        assert_eq!(verify_raw(b"m", &sig, &pk[..31]), Err(CryptoError::PublicKeyLength(31)));
    }

    #[test]
    fn registry_json_round_trip() {
        let mut reg = KeyRegistry::default();
        for i in 0..3 {
            reg.insert(NodeId(i), keygen(i as u64).public());
        }
        let back = KeyRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back, reg);
        assert!(KeyRegistry::from_json("{\"x\":\"00\"}").is_err());
    }
}
