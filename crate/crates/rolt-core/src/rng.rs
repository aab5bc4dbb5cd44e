//! Deterministic RNG streams.
//!
//! Every source of randomness in the crate is a ChaCha8 stream derived from
//! a global seed plus a tag path, e.g. `(seed, ENV, env_index, episode)` or
//! `(seed, MASK, env_index, step)`. Streams are independent of scheduling:
//! parallel workers derive their own streams from their indices, so results
//! do not depend on thread interleaving.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domain tags. Keeping them in one place avoids accidental collisions.
pub mod stream {
    pub const PARAM_INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const MASK: u64 = 3;
    pub const ACTION: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const CORRUPTION: u64 = 6;
    pub const TEST: u64 = 99;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha8 stream from a seed and a tag path.
pub fn derive(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed ^ 0x726f_6c74_u64); // "rolt"
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    let mut s = state;
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
