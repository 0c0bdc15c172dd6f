//! Counter-based RNG streams.
//!
//! Every random draw in the library comes from a stream keyed by
//! `(seed, tags...)`, so independent candidates, iterations, or sweep
//! workers can be evaluated in any order (or in parallel) without
//! changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Mixes a 64-bit value (splitmix64 finalizer).
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a deterministic RNG from a base seed and a tag path.
///
/// Tags identify the consumer: module id, candidate index, stage,
/// iteration. The same `(seed, tags)` always yields the same stream.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = mix(seed ^ 0x51ba_9e2b_21c3_14c1);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    let mut key = [0u8; 32];
    let mut s = state;
    for chunk in key.chunks_exact_mut(8) {
        s = mix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Module tags used when deriving streams.
pub mod tag {
    pub const ENV_NOISE: u64 = 1;
    pub const ENV_MODEL: u64 = 2;
    pub const PROBES: u64 = 3;
    pub const INIT: u64 = 4;
    pub const GRID: u64 = 5;
    pub const FIT: u64 = 6;
    pub const MDP: u64 = 7;
    pub const IDENTIFY: u64 = 8;
}
