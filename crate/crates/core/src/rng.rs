//! Seeded randomness. Every random draw in the crate goes through a
//! [`ChaCha8Rng`] derived from an explicit 64-bit seed; nothing reads entropy
//! from the environment.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stream identifier (frame index, track id, ...).
///
/// SplitMix64 finalizer over `base ^ golden·(stream + 1)`, so neighbouring
/// streams produce unrelated generators.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a sub-stream of `base`.
pub fn stream_rng(base: u64, stream: u64) -> ChaCha8Rng {
    rng_from_seed(derive_seed(base, stream))
}
