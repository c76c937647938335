//! Seedable randomness.
//!
//! Every random draw in this crate goes through ChaCha8, a counter-based
//! stream generator: a seed fully determines the stream, so dropout masks,
//! initializations, shuffles, and synthetic data reproduce exactly across
//! runs. Independent streams are derived with [`mix_seed`].

use rand_chacha::ChaCha8Rng;

pub use rand_chacha::rand_core::SeedableRng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives a stream seed from a base seed and a list of stream labels
/// (layer index, day index, epoch, ...) via iterated SplitMix64.
pub fn mix_seed(base: u64, words: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &w in words {
        state = splitmix64(state ^ w.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
