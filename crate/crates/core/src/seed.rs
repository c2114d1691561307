//! Seed derivation for independent random streams.
//!
//! Every parallel work item draws from its own stream, derived from the
//! master seed and a stable tag, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the sub-stream `tag` of `master`.
pub fn substream(master: u64, tag: u64) -> u64 {
    mix(mix(master) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Seed of a sub-stream addressed by a path of tags.
pub fn substream_path(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(master, |s, &t| substream(s, t))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
