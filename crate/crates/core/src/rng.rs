//! Deterministic seed derivation and stream splitting.
//!
//! Every randomized routine in the crate takes an explicit seed and derives
//! independent sub-streams from it. Parallel maps derive a stream per item
//! from (seed, item index), so results do not depend on scheduling order or
//! on whether the `parallel` feature is enabled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for cheap seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a label into a seed, producing a new independent seed.
pub fn mix(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

/// Derives a seed from a root seed and a path of labels.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(root, |acc, &p| mix(acc, p))
}

/// A seeded generator for the given derivation path.
pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, path))
}
