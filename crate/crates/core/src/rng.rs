//! Seed fan-out.
//!
//! One root seed is split into named, independent streams. Per-item streams
//! are keyed by counters so that work can be distributed across threads in
//! any order and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_str(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(root: u64) -> Self {
        SeedStream(mix64(root))
    }

    pub fn named(self, name: &str) -> Self {
        SeedStream(mix64(self.0 ^ hash_str(name)))
    }

    pub fn index(self, i: u64) -> Self {
        SeedStream(mix64(self.0.wrapping_add(mix64(i.wrapping_add(1)))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Stateless uniform draw in [0, 1) for the given counter.
    pub fn uniform_at(self, counter: u64) -> f64 {
        let bits = mix64(self.0 ^ mix64(counter));
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
