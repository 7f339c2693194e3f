//! Seed derivation. Every random draw in the crate comes from a ChaCha8 stream
//! whose seed is a pure function of a base seed and a path of integers, so
//! results never depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `base`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, parts: &[u64]) -> DetRng {
    DetRng::seed_from_u64(derive_seed(base, parts))
}

// Stream tags for derive_seed paths.
pub(crate) const TAG_SCORE: u64 = 0x5C0E;
pub(crate) const TAG_TREE: u64 = 0x7EEE;
pub(crate) const TAG_WORLD: u64 = 0x0071;
pub(crate) const TAG_TRAIN: u64 = 0x7A17;
pub(crate) const TAG_EVAL: u64 = 0xE7A1;
pub(crate) const TAG_REPLICATION: u64 = 0x4E91;
pub(crate) const TAG_REPORT: u64 = 0x4E90;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable_and_path_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        let a = rng_for(3, &[4]).next_u64();
        let b = rng_for(3, &[4]).next_u64();
        assert_eq!(a, b);
    }
}
