//! Deterministic RNG streams keyed by `(seed, tag, ...)`.
//!
//! Every random quantity in a run is drawn from a stream derived from the
//! master seed and a stable key, so strategies sharing a seed see the same
//! environment regardless of the order in which they consume randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Edge;

pub const TAG_TRAVEL: u64 = 1;
pub const TAG_COMPLAINTS: u64 = 2;
pub const TAG_THINNING: u64 = 3;
pub const TAG_RANDOM_POLICY: u64 = 4;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mixed = key
        .iter()
        .fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)));
    ChaCha8Rng::seed_from_u64(mixed)
}

pub fn edge_key(e: Edge) -> u64 {
    (u64::from(e.0 .0) << 32) | u64::from(e.1 .0)
}
