//! Counter-based normal streams.
//!
//! Every replication owns a fixed 16-word block of a ChaCha8 keystream,
//! addressed by `(seed, lane, replication)`. Draw position `p` within the
//! replication always reads words `4p..4p+4`, so a replication's normals do
//! not depend on how the replication range is partitioned across workers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Normals available per replication.
pub const DRAWS_PER_REPLICATION: usize = 4;
const WORDS_PER_REPLICATION: u128 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    /// Independent sub-stream, e.g. a θ index or an estimator lane.
    pub lane: u64,
}

impl StreamKey {
    pub fn new(seed: u64, lane: u64) -> Self {
        Self { seed, lane }
    }

    /// A cursor positioned at the start of `replication`.
    pub fn at(&self, replication: u64) -> ReplicationStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.lane);
        rng.set_word_pos(replication as u128 * WORDS_PER_REPLICATION);
        ReplicationStream { rng }
    }

    /// The first `N` normals of one replication.
    pub fn normals<const N: usize>(&self, replication: u64) -> [f64; N] {
        self.at(replication).next_replication()
    }
}

/// Sequential reader over consecutive replications of one lane.
#[derive(Debug, Clone)]
pub struct ReplicationStream {
    rng: ChaCha8Rng,
}

impl ReplicationStream {
    /// Reads one replication's block and returns its first `N` normals
    /// (`N <= DRAWS_PER_REPLICATION`), leaving the cursor at the next
    /// replication.
    pub fn next_replication<const N: usize>(&mut self) -> [f64; N] {
        assert!(N <= DRAWS_PER_REPLICATION);
        let mut block = [0u64; 8];
        for word in block.iter_mut() {
            *word = self.rng.next_u64();
        }
        std::array::from_fn(|i| box_muller(block[2 * i], block[2 * i + 1]))
    }
}

#[inline]
fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
