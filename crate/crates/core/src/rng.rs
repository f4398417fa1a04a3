//! Seed splitting.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! `derive_seed(parent, tag)` or `derive_index(parent, index)`. Streams are
//! named, so adding a new consumer never shifts the values seen by existing
//! ones, and per-identity streams can be drawn in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Child seed for a named stream.
pub fn derive_seed(parent: u64, tag: &str) -> u64 {
    mix64(parent ^ mix64(fnv1a(tag)))
}

/// Child seed for the `index`-th member of a family of streams.
pub fn derive_index(parent: u64, index: u64) -> u64 {
    mix64(parent.wrapping_add(mix64(index ^ 0xA5A5_A5A5_A5A5_A5A5)))
}

pub fn stream(parent: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, tag))
}

pub fn indexed_stream(parent: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_index(derive_seed(parent, tag), index))
}
