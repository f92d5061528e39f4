//! Seed derivation for independent, reproducible random streams.
//!
//! Every randomized routine takes an explicit `u64` seed. Sub-tasks (one per
//! model, truth round, or projection chunk) derive their own stream from the
//! parent seed and a tag path, so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a tag path into a parent seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(GOLDEN))))
}

/// A ChaCha8 generator for `seed`, positioned on `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream tags. Kept distinct so that purposes never share a stream.
pub mod tag {
    pub const TREND: u64 = 1;
    pub const VARIABILITY: u64 = 2;
    pub const PROJECTION: u64 = 3;
    pub const TRUTH_ROUND: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
    pub const ENVELOPE: u64 = 6;
    pub const OBSERVATION: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_differ_by_tag() {
        let a = derive_seed(42, &[1, 0]);
        let b = derive_seed(42, &[1, 1]);
        let c = derive_seed(42, &[2, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, &[1, 0]));
    }

    #[test]
    fn streams_are_reproducible() {
        let x: Vec<u64> = (0..4).map(|_| stream_rng(7, 3).random()).collect();
        assert!(x.windows(2).all(|w| w[0] == w[1]));
        let mut r1 = stream_rng(7, 3);
        let mut r2 = stream_rng(7, 4);
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
    }
}
