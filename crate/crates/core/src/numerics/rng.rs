//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Stream for a base seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-stream `index` of a base seed.
pub fn substream(seed: u64, index: u64) -> Stream {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index.wrapping_add(1));
    r
}

/// Derives a child seed from a parent seed and a label, used to give every
/// branch of a tree its own reproducible stream.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    // SplitMix64 finalizer on the combined value.
    let mut z = parent ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
