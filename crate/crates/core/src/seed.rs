//! Counter-based seed derivation.
//!
//! Every random stream in the toolkit is derived from one 64-bit root seed by
//! `split(seed, index)`. Streams for different indices are independent, so
//! adding a consumer never perturbs the draws of an earlier one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the top-level consumers of a run seed.
pub mod stream {
    pub const SAMPLING: u64 = 1;
    pub const CV_FOLDS: u64 = 2;
    pub const CMAES_RESTARTS: u64 = 3;
    pub const ORACLE_NOISE: u64 = 4;
    pub const ORACLE_WEIGHTS: u64 = 5;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child stream `index` from `seed`.
pub fn split(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Hashes a sequence of words into a seed; used for value-keyed noise.
pub fn hash_words(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    words.into_iter().fold(splitmix64(seed), |acc, w| splitmix64(acc ^ w))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
