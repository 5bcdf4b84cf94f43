//! Seed derivation. Every random stream in a run is keyed by the run seed and
//! a small tuple of stream identifiers, so adding a stream never perturbs the
//! others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags used by the engine and scenario builder.
pub mod stream {
    pub const DATASET: u64 = 0;
    pub const PARTITION: u64 = 1;
    pub const HOLDOUT: u64 = 2;
    pub const PROFILES: u64 = 3;
    pub const SELECTION: u64 = 10;
    pub const LOCAL_TRAINING: u64 = 11;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each element of `path` into a new 64-bit seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
