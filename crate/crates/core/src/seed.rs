//! Seed derivation.
//!
//! Every record of a corpus gets its own sub-seed computed from the corpus
//! seed and the record's attempt index, so records can be generated in any
//! order (or in parallel) and still come out identical.
//!
//! The mixing function is SplitMix64 applied to `seed ^ golden * (index + 1)`.
//! All generators are [`ChaCha8Rng`] instances seeded from a `u64`, which
//! keeps streams stable across platforms and `rand` releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the sub-seed of stream `index` under `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ GOLDEN.wrapping_mul(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable() {
        assert_eq!(derive(7, 3), derive(7, 3));
        assert_ne!(derive(7, 3), derive(7, 4));
        assert_ne!(derive(7, 3), derive(8, 3));
    }

    #[test]
    fn splitmix_reference_value() {
        // First output of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
