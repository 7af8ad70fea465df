//! Seed derivation so that every random stream in a run is a pure function of
//! the run seed and the stream's coordinates (round, client, purpose).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

// Stream tags.
pub(crate) const PARTITION: u64 = 1;
pub(crate) const LOCAL_TRAIN: u64 = 2;
pub(crate) const GAE_INIT: u64 = 3;
pub(crate) const GAE_EPOCH: u64 = 4;
pub(crate) const MP: u64 = 5;
