//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a base seed plus a small
//! tuple of integers (block index, cluster count, restart, ...). Derivation
//! uses SplitMix64 finalization so the mapping is stable across platforms and
//! toolchain versions, unlike `std::hash`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a key path.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    let mut h = mix(base.wrapping_add(GOLDEN));
    for &k in keys {
        h = mix(h ^ mix(k.wrapping_add(GOLDEN)));
    }
    h
}

/// The crate-wide RNG, seeded from a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_key_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }
}
