//! Seeded random streams.
//!
//! Every simulation consumes randomness from a [`SimRng`] derived from a
//! root seed and a path of stream tags, so that independent components
//! (seats, episodes, tournament pairings) never share a stream and results
//! do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the child stream `tag` of `seed`.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &t| child_seed(s, t))
}

pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}
