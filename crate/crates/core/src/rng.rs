//! Counter-based random streams keyed by `(seed, path, attempt, level)`.
//!
//! Each key selects a ChaCha8 key, and the clock level selects the ChaCha
//! stream. Streams are independent of evaluation order, so simulations are
//! reproducible regardless of how paths are scheduled across threads, and
//! the level-`k` clock draws the same numbers whatever the truncation depth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: u64,
    attempt: u64,
}

/// Stream id reserved for draws that do not belong to a clock level.
const AUXILIARY_STREAM: u64 = u64::MAX;

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey {
            seed,
            path: 0,
            attempt: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Key of the `index`-th independent path under the same seed.
    pub fn path(self, index: u64) -> Self {
        StreamKey {
            path: index,
            attempt: 0,
            ..self
        }
    }

    /// Key of the `index`-th retry of the same path (rejection sampling).
    pub fn attempt(self, index: u64) -> Self {
        StreamKey { attempt: index, ..self }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&self.path.to_le_bytes());
        bytes[16..24].copy_from_slice(&self.attempt.to_le_bytes());
        bytes
    }

    /// The stream feeding the level-`level` Poisson clock and its resampling.
    pub fn level_stream(&self, level: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(level as u64);
        rng
    }

    pub fn auxiliary_stream(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(AUXILIARY_STREAM);
        rng
    }
}
