//! Turns a model prediction over live network features into a block nonce.
//!
//! With whitening off the nonce is the binary64 bit pattern of the
//! prediction (after folding `-0.0`), so distinct predictions give distinct
//! nonces. With whitening on it is the first 8 bytes, read big-endian, of
//! SHA-256 over the little-endian prediction bytes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::randomness::canonical_key;
use crate::regressors::{FittedModel, ModelKind, RegressorError};

#[derive(Debug, Error)]
pub enum NonceError {
    #[error("invalid network features: {0}")]
    InvalidFeatures(String),
    #[error("model prediction failed: {0}")]
    Model(#[from] RegressorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkFeatures {
    pub delay_ms: f64,
    pub jitter_ms: f64,
    pub loss_pct: f64,
}

impl NetworkFeatures {
    pub fn validate(&self) -> Result<(), NonceError> {
        let all = [self.delay_ms, self.jitter_ms, self.loss_pct];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(NonceError::InvalidFeatures("non-finite value".into()));
        }
        if !(0.0..=100.0).contains(&self.loss_pct) {
            return Err(NonceError::InvalidFeatures(format!(
                "loss_pct {} outside [0, 100]",
                self.loss_pct
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.delay_ms, self.jitter_ms, self.loss_pct]
    }

    /// SHA-256 over the three fields as little-endian binary64.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in self.as_array() {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonceCandidate {
    pub nonce: u64,
    pub prediction_mbps: f64,
    #[serde(with = "hex_bytes32")]
    pub feature_digest: [u8; 32],
    pub model_kind: ModelKind,
    pub whitened: bool,
    pub created_at_ms: u64,
}

pub fn encode_plain(prediction: f64) -> u64 {
    canonical_key(prediction)
}

pub fn encode_whitened(prediction: f64) -> u64 {
    let digest = Sha256::digest((prediction + 0.0).to_le_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// True when `nonce` is the plain or whitened encoding of `prediction`.
pub fn nonce_matches_prediction(nonce: u64, prediction: f64) -> bool {
    prediction.is_finite() && (nonce == encode_plain(prediction) || nonce == encode_whitened(prediction))
}

pub fn derive_nonce(
    model: &FittedModel,
    features: &NetworkFeatures,
    whitening: bool,
    created_at_ms: u64,
) -> Result<NonceCandidate, NonceError> {
    features.validate()?;
    let prediction = model.predict(&features.as_array())?;
    let nonce = if whitening {
        encode_whitened(prediction)
    } else {
        encode_plain(prediction)
    };
    Ok(NonceCandidate {
        nonce,
        prediction_mbps: prediction + 0.0,
        feature_digest: features.digest(),
        model_kind: model.kind(),
        whitened: whitening,
        created_at_ms,
    })
}

/// FIFO window of recently used nonces, owned by one miner.
#[derive(Debug, Clone, Default)]
pub struct NonceWindow {
    capacity: usize,
    entries: VecDeque<u64>,
}

pub const DEFAULT_WINDOW: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Screening {
    Accept,
    Reject,
}

impl NonceWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(DEFAULT_WINDOW)),
        }
    }

    pub fn contains(&self, nonce: u64) -> bool {
        self.entries.contains(&nonce)
    }

    /// Records a nonce, evicting the oldest entry once full.
    pub fn push(&mut self, nonce: u64) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(nonce);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn screen_duplicates(candidate: &NonceCandidate, history: &NonceWindow) -> Screening {
    if history.contains(candidate.nonce) {
        Screening::Reject
    } else {
        Screening::Accept
    }
}

pub(crate) mod hex_bytes32 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        crate::blockchain::parse_hash(&s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{fit_rows, ForestParams, Hyperparams, MaxFeatures, RegressorSpec};

    fn constant_model(value: f64) -> FittedModel {
        let spec = RegressorSpec::default_for(ModelKind::GradientBoosting, 0);
        let rows = vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]];
        fit_rows(&spec, &rows, &[value, value]).unwrap()
    }

    fn features() -> NetworkFeatures {
        NetworkFeatures { delay_ms: 7.0, jitter_ms: 1.0, loss_pct: 0.5 }
    }

    #[test]
    fn plain_encoding_vectors() {
        let z = derive_nonce(&constant_model(0.0), &features(), false, 5).unwrap();
        assert_eq!(z.nonce, 0);
        assert_eq!(z.created_at_ms, 5);
        let one = derive_nonce(&constant_model(1.0), &features(), false, 0).unwrap();
        assert_eq!(one.nonce, 0x3FF0_0000_0000_0000);
        assert_eq!(encode_plain(-0.0), 0);
    }

    #[test]
    fn stump_prediction_becomes_nonce() {
        let spec = RegressorSpec::new(
            Hyperparams::RandomForest(ForestParams {
                n_trees: 1,
                max_depth: 1,
                bootstrap: false,
                max_features: MaxFeatures::All,
            }),
            0,
        );
        let rows = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![10.0, 0.0, 0.0],
            vec![10.0, 0.0, 0.0],
        ];
        let m = fit_rows(&spec, &rows, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        let c = derive_nonce(&m, &features(), false, 0).unwrap();
        assert_eq!(c.prediction_mbps, 1.0);
        assert_eq!(c.nonce, 1.0f64.to_bits());
        assert_eq!(c.model_kind, ModelKind::RandomForest);
    }

    #[test]
    fn whitened_encoding() {
        let c = derive_nonce(&constant_model(1.0), &features(), true, 0).unwrap();
        let digest = Sha256::digest(1.0f64.to_le_bytes());
        let mut want = [0u8; 8];
        want.copy_from_slice(&digest[..8]);
        assert_eq!(c.nonce, u64::from_be_bytes(want));
        assert!(nonce_matches_prediction(c.nonce, 1.0));
        assert!(!nonce_matches_prediction(c.nonce, 1.5));
    }

    #[test]
    fn rejects_bad_features() {
        let m = constant_model(1.0);
        let bad = NetworkFeatures { loss_pct: 120.0, ..features() };
        assert!(matches!(derive_nonce(&m, &bad, false, 0), Err(NonceError::InvalidFeatures(_))));
        let bad = NetworkFeatures { delay_ms: f64::NAN, ..features() };
        assert!(derive_nonce(&m, &bad, false, 0).is_err());
    }

    #[test]
    fn digest_tracks_features() {
        let a = features().digest();
        let b = NetworkFeatures { jitter_ms: 1.0000001, ..features() }.digest();
        assert_ne!(a, b);
    }

    fn candidate(nonce: u64) -> NonceCandidate {
        NonceCandidate {
            nonce,
            prediction_mbps: f64::from_bits(nonce),
            feature_digest: [0; 32],
            model_kind: ModelKind::ExtraTrees,
            whitened: false,
            created_at_ms: 0,
        }
    }

    #[test]
    fn window_screening() {
        let mut w = NonceWindow::new(2);
        assert_eq!(screen_duplicates(&candidate(1), &w), Screening::Accept);
        w.push(1);
        assert_eq!(screen_duplicates(&candidate(1), &w), Screening::Reject);
        // Traced by hand: [1] -> [1,2] -> [2,3]; nonce 1 was pushed three
        // insertions ago and has been evicted.
        w.push(2);
        w.push(3);
        assert_eq!(screen_duplicates(&candidate(1), &w), Screening::Accept);
        assert_eq!(screen_duplicates(&candidate(2), &w), Screening::Reject);
        assert_eq!(w.len(), 2);

        let mut none = NonceWindow::new(0);
        none.push(9);
        assert!(none.is_empty());
        assert_eq!(screen_duplicates(&candidate(9), &none), Screening::Accept);
    }
}
