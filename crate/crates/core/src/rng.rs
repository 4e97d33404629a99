//! Seeded random streams.
//!
//! Every random draw is keyed by `(seed, path)` where `path` names the job
//! (replicate index, condition, purpose). Streams are ChaCha8 keyed by a
//! SplitMix64 digest of the path, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent generator for `seed` and a path of tags.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    key[..8].copy_from_slice(&h.to_le_bytes());
    for (chunk, &tag) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(tag.wrapping_add(chunk as u64 + 1)));
    }
    key[8..16].copy_from_slice(&h.to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(h).to_le_bytes());
    key[24..].copy_from_slice(&(path.len() as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// A child seed for `(seed, path)`, for APIs that take a plain seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, path).next_u64()
}

/// Stable tags for the different consumers of randomness.
pub mod tag {
    pub const CV_FOLDS: u64 = 1;
    pub const TOPOLOGY: u64 = 2;
    pub const WEIGHTS: u64 = 3;
    pub const REWIRE: u64 = 4;
    pub const MEANS: u64 = 5;
    pub const EXPRESSION: u64 = 6;
    pub const NETWORK_SAMPLES: u64 = 7;
    pub const CONSTRAINTS: u64 = 8;
    pub const ESTIMATION: u64 = 9;
    pub const REPLICATE: u64 = 10;
}
