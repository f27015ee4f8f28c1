//! Deterministic RNG substreams.
//!
//! Every randomized component (mediator simulation, bootstrap replicates,
//! experiment replications) draws from a substream derived from the master
//! seed and a path of integer tags. Results are therefore reproducible for a
//! fixed seed and independent of how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 step; a well-mixed 64-bit permutation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of tags.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &tag in path {
        s = splitmix64(s ^ splitmix64(tag.wrapping_add(0x1234_5678_9abc_def1)));
    }
    s
}

/// A seeded ChaCha stream for the given substream path.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(seed, path))
}
