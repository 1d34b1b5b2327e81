//! Seed derivation. Every stochastic step draws from a ChaCha stream whose
//! seed is a pure function of the run seed and a tuple of counters, so
//! results never depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed from a parent seed and a list of counters.
pub fn derive(seed: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(mix64(seed), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, counters))
}

// Stream tags keep unrelated consumers of one run seed apart.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_DROPOUT: u64 = 2;
pub(crate) const TAG_BATCHES: u64 = 3;
pub(crate) const TAG_MC: u64 = 4;
pub(crate) const TAG_CAP: u64 = 5;
pub(crate) const TAG_SMOTE: u64 = 6;
pub(crate) const TAG_SPLIT: u64 = 7;
pub(crate) const TAG_SYNTH: u64 = 8;
pub(crate) const TAG_SUBSAMPLE: u64 = 9;
pub(crate) const TAG_TRAIN: u64 = 10;
pub(crate) const TAG_VALIDATION: u64 = 11;
