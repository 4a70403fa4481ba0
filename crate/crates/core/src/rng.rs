//! Seed derivation. Every stochastic component gets its own ChaCha stream
//! derived from a run seed and an index, so streams never interfere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ stream) ^ index)
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, stream: u64, index: u64) -> Rng {
    rng_from(derive_seed(seed, stream, index))
}

/// Stream identifiers used by the training and evaluation loops.
pub mod streams {
    pub const EPISODE_LAYOUT: u64 = 1;
    pub const RED_POLICY: u64 = 2;
    pub const BLUE_POLICY: u64 = 3;
    pub const EVALUATION: u64 = 4;
    pub const TRAINING: u64 = 5;
    pub const OPPONENT_DRAW: u64 = 6;
    pub const INIT: u64 = 7;
}
