//! Seeded, splittable random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 generator keyed by
//! `(seed, stream)`. ChaCha is counter based, so distinct stream ids give
//! independent sequences from one user seed and every consumer can be
//! replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids below this value are reserved for per-kernel feature maps.
pub const DATA_STREAM: u64 = 1 << 40;
pub const TARGET_STREAM: u64 = DATA_STREAM + 1;

pub type StreamRng = ChaCha8Rng;

pub fn keyed(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator used by the synthetic stream generators in [`crate::data`].
pub fn data_rng(seed: u64) -> StreamRng {
    keyed(seed, DATA_STREAM)
}
