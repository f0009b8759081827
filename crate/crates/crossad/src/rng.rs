//! Deterministic seed derivation. Every randomized stage draws from its
//! own ChaCha8 stream keyed by (run seed, stream tag), so adding draws to
//! one stage never shifts another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INJECT: u64 = 0x01;
pub const STREAM_INJECT_TYPE: u64 = 0x02;
pub const STREAM_PARAM_INIT: u64 = 0x03;
pub const STREAM_TRIPLET_SOURCE: u64 = 0x04;
pub const STREAM_TRIPLET_TARGET: u64 = 0x05;
pub const STREAM_BATCH: u64 = 0x06;
pub const STREAM_CENTRE: u64 = 0x07;
pub const STREAM_SYNTH: u64 = 0x08;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a stream tag into an independent 64-bit seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

/// RNG for the given (base seed, stream tag) pair.
pub fn stream_rng(base: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}

/// RNG for a stage that also varies by step (epoch, item index, ...).
pub fn indexed_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(derive_seed(base, stream) ^ splitmix64(index)))
}
