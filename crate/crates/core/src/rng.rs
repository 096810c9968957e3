//! Seed derivation. Every random stream in the crate is a ChaCha generator
//! seeded from a parent seed and a stream key, so generation order never
//! changes the numbers a given stream produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a numeric key.
pub fn derive(seed: u64, key: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ key.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derive a child seed from a parent seed and a string key (FNV-1a folded).
pub fn derive_str(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    derive(seed, h)
}

pub fn stream(seed: u64, key: &str) -> Rng {
    Rng::seed_from_u64(derive_str(seed, key))
}

pub fn stream_n(seed: u64, key: &str, n: u64) -> Rng {
    Rng::seed_from_u64(derive(derive_str(seed, key), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream(7, "x"), |r, _| Some(r.random()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream(7, "x"), |r, _| Some(r.random()))
            .collect();
        let c: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(stream(7, "y"), |r, _| Some(r.random()))
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive(1, 2), derive(2, 1));
    }
}
