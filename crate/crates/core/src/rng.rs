//! Seed derivation for reproducible, embarrassingly parallel experiments.
//!
//! Every trial gets its own ChaCha stream keyed by a mix of the base seed and
//! the trial coordinates, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Stable across platforms and releases.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags (grid indices, trial numbers)
/// into a single derived seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(base);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t.wrapping_add(0xA5A5_A5A5_A5A5_A5A5)));
    }
    acc
}

/// Seeded stream for a derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
