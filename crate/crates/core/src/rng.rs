//! Seeded RNG substreams.
//!
//! All randomness in the crate flows from a single 64-bit master seed through
//! named substreams, so any component can be re-derived in isolation and
//! samples can be generated concurrently without changing the output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Well-known substream labels. Keeping them in one place avoids collisions.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const NOISE_WEIGHTS: u64 = 2;
    pub const NOISE_SAMPLE_BASE: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const BATCHING: u64 = 5;
    pub const SUITE: u64 = 6;
    pub const PEER: u64 = 7;
}

/// Deterministic RNG for `(seed, stream)`. Streams are independent ChaCha
/// streams over a seed-derived key, so adding a stream never perturbs others.
pub fn substream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-item RNG derived from `(seed, stream, index)`; used where items must be
/// reproducible independently of generation order.
pub fn item_stream(seed: u64, stream: u64, index: u64) -> ChaCha12Rng {
    // SplitMix64 step decorrelates (stream, index) pairs before keying.
    let mut z = stream
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index)
        .wrapping_add(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(z);
    rng
}
