//! Deterministic random streams.
//!
//! Every random decision in a run is drawn from a stream keyed by
//! `(seed, generation, index)`, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, generation, index)`.
pub fn stream(seed: u64, generation: u64, index: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(generation ^ splitmix64(index.wrapping_add(0x5851_F42D))));
    ChaCha8Rng::seed_from_u64(key)
}
