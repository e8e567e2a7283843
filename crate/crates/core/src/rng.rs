//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes an explicit generator. Independent work
//! items (one evidence set, one dataset example) get their own stream
//! derived from a base seed and the item index, so results do not depend on
//! scheduling.

use rand::SeedableRng;

/// The generator used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha12Rng;

/// A 64-bit seed. Same seed, same stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> SeededRng {
        SeededRng::seed_from_u64(self.0)
    }

    /// Sub-seed for work item `index`.
    pub fn derive(self, index: u64) -> RngSeed {
        RngSeed(splitmix64(
            splitmix64(self.0) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93),
        ))
    }

    /// Sub-seed for a named purpose, e.g. `b"split"`.
    pub fn derive_named(self, tag: &[u8]) -> RngSeed {
        // FNV-1a over the tag, then mixed with the seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in tag {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        RngSeed(splitmix64(self.0 ^ splitmix64(h)))
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws an index from an unnormalized non-negative weight vector.
///
/// Returns the last index with positive weight if rounding pushes the draw
/// past the cumulative total.
pub fn sample_categorical<R: rand::Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}
