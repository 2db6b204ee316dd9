//! Deterministic seed derivation.
//!
//! Every random stream in the crate (chains, replications, data sets) is
//! derived from a master seed and a counter, never from execution order, so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(parent, tag, index)`.
///
/// `tag` separates unrelated uses of the same parent (e.g. data generation
/// vs. sampling) so that they never share a stream.
pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    mix(mix(mix(parent) ^ tag) ^ index)
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub mod tags {
    pub const CHAIN: u64 = 0x4348_4149_4e00_0001;
    pub const DATA: u64 = 0x4441_5441_0000_0002;
    pub const FIT: u64 = 0x4649_5400_0000_0003;
    pub const INIT: u64 = 0x494e_4954_0000_0004;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_separates_indices() {
        assert_eq!(derive_seed(7, 1, 2), derive_seed(7, 1, 2));
        assert_ne!(derive_seed(7, 1, 2), derive_seed(7, 1, 3));
        assert_ne!(derive_seed(7, 1, 2), derive_seed(7, 2, 2));
        assert_ne!(derive_seed(7, 1, 2), derive_seed(8, 1, 2));
    }
}
