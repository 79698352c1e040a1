//! Seed derivation shared by every randomized operation.
//!
//! All randomness flows from a `u64` seed through [`rng`]. Replicate `r` of a
//! run seeded with `s` uses `s + r`; independent sub-streams (cases, fresh
//! networks) use [`mix`] so they never collide with replicate offsets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for replicate `index` of a run seeded with `base`.
pub fn replicate(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

/// SplitMix64 finalizer applied to `base` and a stream index.
pub fn mix(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
