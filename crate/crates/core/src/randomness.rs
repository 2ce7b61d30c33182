//! Uniqueness rate and normalized Shannon entropy of prediction streams.
//!
//! Two predictions are "the same" when their binary64 bit patterns match
//! after folding `-0.0` into `+0.0`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RandomnessError {
    #[error("empty input")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

/// Share of distinct values among all values, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub n_total: usize,
    pub n_unique: usize,
    pub rate_pct: f64,
    /// Repeated values with their multiplicity, most frequent first.
    pub duplicates: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub entropy_bits: f64,
    /// `entropy_bits / log2(n_total)`, defined as 0 for a single value.
    pub normalized: f64,
    pub n_total: usize,
}

pub fn canonical_key(v: f64) -> u64 {
    // Adding +0.0 maps -0.0 to +0.0 and leaves every other value unchanged.
    (v + 0.0).to_bits()
}

pub fn canonicalize(values: &[f64]) -> Result<Vec<u64>, RandomnessError> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_finite() {
                Ok(canonical_key(v))
            } else {
                Err(RandomnessError::NonFinite(i))
            }
        })
        .collect()
}

fn counts(values: &[f64]) -> Result<HashMap<u64, usize>, RandomnessError> {
    if values.is_empty() {
        return Err(RandomnessError::Empty);
    }
    let mut map = HashMap::with_capacity(values.len());
    for key in canonicalize(values)? {
        *map.entry(key).or_insert(0) += 1;
    }
    Ok(map)
}

pub fn randomness_rate(values: &[f64]) -> Result<RandomnessReport, RandomnessError> {
    let map = counts(values)?;
    let n_total = values.len();
    let n_unique = map.len();
    let mut duplicates: Vec<(u64, usize)> = map.into_iter().filter(|&(_, c)| c > 1).collect();
    duplicates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RandomnessReport {
        n_total,
        n_unique,
        rate_pct: 100.0 * n_unique as f64 / n_total as f64,
        duplicates: duplicates
            .into_iter()
            .map(|(k, c)| (f64::from_bits(k), c))
            .collect(),
    })
}

/// Empirical entropy in bits, computed as `log2(N) - (1/N) * sum(c * log2(c))`
/// over value counts `c`. In this form an all-distinct stream scores exactly
/// `log2(N)`.
pub fn shannon_entropy(values: &[f64]) -> Result<EntropyReport, RandomnessError> {
    let map = counts(values)?;
    let n_total = values.len();
    let n = n_total as f64;
    let entropy_bits = if map.len() == 1 {
        0.0
    } else {
        let mut cs: Vec<usize> = map.into_values().filter(|&c| c > 1).collect();
        cs.sort_unstable();
        let weighted: f64 = cs.iter().map(|&c| c as f64 * (c as f64).log2()).sum();
        (n.log2() - weighted / n).max(0.0)
    };
    let normalized = if n_total < 2 {
        0.0
    } else {
        (entropy_bits / n.log2()).clamp(0.0, 1.0)
    };
    Ok(EntropyReport {
        entropy_bits,
        normalized,
        n_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn signed_zero_folds() {
        let k = canonicalize(&[0.0, -0.0]).unwrap();
        assert_eq!(k[0], k[1]);
        assert_eq!(canonicalize(&[1.0]).unwrap(), vec![0x3FF0_0000_0000_0000]);
        assert_eq!(canonicalize(&[1.0, f64::NAN]), Err(RandomnessError::NonFinite(1)));
    }

    #[test]
    fn keys_injective_where_values_differ() {
        let mut rng = crate::rng::stream(1, 0);
        let mut vals: Vec<f64> = (0..1000).map(|_| rng.random_range(-1e3..1e3)).collect();
        // Force some exact repeats.
        for i in 0..50 {
            vals[i * 2 + 1] = vals[i * 2];
        }
        let keys = canonicalize(&vals).unwrap();
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                assert_eq!(keys[i] == keys[j], vals[i] == vals[j]);
            }
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(randomness_rate(&[1.0, 2.0, 3.0, 4.0]).unwrap().rate_pct, 100.0);
        let r = randomness_rate(&[1.0; 4]).unwrap();
        assert_eq!((r.n_unique, r.n_total, r.rate_pct), (1, 4, 25.0));
        assert_eq!(r.duplicates, vec![(1.0, 4)]);
        assert_eq!(randomness_rate(&[]), Err(RandomnessError::Empty));
        let single = randomness_rate(&[7.0]).unwrap();
        assert_eq!(single.rate_pct, 100.0);
    }

    #[test]
    fn duplicates_sorted_by_multiplicity() {
        let r = randomness_rate(&[5.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.duplicates, vec![(2.0, 3), (1.0, 2)]);
    }

    #[test]
    fn entropy_examples() {
        let e = shannon_entropy(&[3.3; 10]).unwrap();
        assert_eq!((e.entropy_bits, e.normalized), (0.0, 0.0));
        let e = shannon_entropy(&(0..37).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert_eq!(e.normalized, 1.0);
        assert_eq!(e.entropy_bits, 37f64.log2());
        let e = shannon_entropy(&[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!((e.entropy_bits, e.normalized), (1.0, 0.5));
        let e = shannon_entropy(&[9.0]).unwrap();
        assert_eq!((e.entropy_bits, e.normalized), (0.0, 0.0));
        assert_eq!(shannon_entropy(&[]), Err(RandomnessError::Empty));
    }

    #[test]
    fn duplicating_one_element_lowers_both() {
        let base: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let r0 = randomness_rate(&base).unwrap().rate_pct;
        let e0 = shannon_entropy(&base).unwrap().normalized;
        for i in 0..base.len() {
            let mut v = base.clone();
            v.push(base[i]);
            assert!(randomness_rate(&v).unwrap().rate_pct < r0);
            assert!(shannon_entropy(&v).unwrap().normalized < e0);
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in prop::collection::vec(0u8..6, 1..40), seed: u64) {
            let a: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let mut rng = crate::rng::stream(seed, 0);
            use rand::seq::SliceRandom;
            v.shuffle(&mut rng);
            let b: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            prop_assert_eq!(randomness_rate(&a).unwrap().rate_pct, randomness_rate(&b).unwrap().rate_pct);
            prop_assert_eq!(shannon_entropy(&a).unwrap(), shannon_entropy(&b).unwrap());
        }

        #[test]
        fn bounds(v in prop::collection::vec(0u8..10, 1..64)) {
            let vals: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let n = vals.len() as f64;
            let r = randomness_rate(&vals).unwrap();
            let e = shannon_entropy(&vals).unwrap();
            prop_assert!(r.rate_pct >= 100.0 / n - 1e-12 && r.rate_pct <= 100.0);
            prop_assert!((0.0..=1.0).contains(&e.normalized));
            if vals.len() >= 2 {
                prop_assert_eq!(e.normalized == 1.0, r.rate_pct == 100.0);
            }
        }
    }
}
