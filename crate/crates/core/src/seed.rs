//! Deterministic seed derivation.
//!
//! Every randomized step in the crate draws from a ChaCha stream whose seed is
//! derived from a master seed plus a stream tag and an index, so any single
//! repetition or ordering can be replayed on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_SAMPLE: u64 = 0x5341_4d50;
pub(crate) const STREAM_REPETITION: u64 = 0x5245_5045;
pub(crate) const STREAM_ORDERING: u64 = 0x4f52_4452;
pub(crate) const STREAM_CRITERION: u64 = 0x4352_4954;
pub(crate) const STREAM_COLUMN: u64 = 0x434f_4c55;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed from `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
