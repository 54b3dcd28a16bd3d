//! Seeded randomness helpers.
//!
//! Every randomized routine in this crate draws from a ChaCha20 stream
//! cipher generator seeded explicitly, so runs are reproducible on any
//! platform within one build. Independent streams (e.g. one per bootstrap
//! replicate) are derived from a base seed with splitmix64, the standard
//! 64-bit mixing function.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// splitmix64 finalizer: maps a 64-bit state to a well-mixed output.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for an independent stream: `splitmix64` applied to the
/// base seed offset by the stream index. Distinct `(base, stream)` pairs
/// yield distinct, well-separated generator states.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(1)))
}

/// ChaCha20 generator for the given seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// ChaCha20 generator for stream `stream` of base seed `base`.
pub fn stream_rng(base: u64, stream: u64) -> ChaCha20Rng {
    seeded_rng(derive_seed(base, stream))
}
