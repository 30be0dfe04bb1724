//! Seeded, splittable random streams.
//!
//! Every parallel task derives its generator from a master seed and a path
//! of task indices, so results never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A position in the tree of random streams rooted at a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { key: splitmix64(seed) }
    }

    /// Stream for the `index`-th child task.
    pub fn child(self, index: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F))),
        }
    }

    pub fn key(self) -> u64 {
        self.key
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
