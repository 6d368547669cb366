//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a ChaCha stream whose seed is
//! derived from a single root seed and a string label. Re-running with the
//! same root therefore reproduces every draw, and independent streams
//! (task generation, parameter init, per-epoch shuffles) never interleave.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// SplitMix64 finalizer; full-period mixing of a 64-bit state.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` and a stream label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut state = root;
    let mut out = splitmix64(&mut state);
    for &b in label.as_bytes() {
        state ^= u64::from(b);
        out ^= splitmix64(&mut state);
    }
    out
}

/// A seeded, portable RNG for the stream named `label`.
pub fn stream_rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

/// Same as [`stream_rng`] but additionally keyed by an index (epoch, class, ...).
pub fn indexed_rng(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut state = derive_seed(root, label) ^ index.rotate_left(17);
    ChaCha8Rng::seed_from_u64(splitmix64(&mut state))
}
