//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream selected by a
//! `(seed, stream)` pair. ChaCha is counter based, so streams are
//! independent and the output is identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids reserved for the fixed pipeline stages. Per-tree streams use
/// `TREE_BASE + tree_index`.
pub mod streams {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const TELEMETRY: u64 = 3;
    pub const WORKLOAD: u64 = 4;
    pub const NETWORK: u64 = 5;
    pub const KEYS: u64 = 6;
    pub const TREE_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
