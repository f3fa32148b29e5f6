//! Reproducible random streams.
//!
//! Every stochastic routine takes an [`RngSpec`]. The pair `(seed, stream_id)`
//! selects a ChaCha8 key and stream, so draws depend only on the pair and not
//! on the platform, thread count or scheduling order.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A family of child streams, one per `index`, disjoint from this stream
    /// and from the children of any other `(seed, stream_id)`.
    pub fn substream(&self, index: u64) -> Self {
        let mut state = self.seed ^ self.stream_id.rotate_left(32) ^ 0x5bd1_e995_0000_0001;
        let child_seed = splitmix(&mut state) ^ splitmix(&mut state).rotate_left(17);
        Self { seed: child_seed, stream_id: index }
    }
}

/// Uniform draw on the open interval `(0, 1)`, with 53 random bits.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n` without modulo bias.
pub fn index_below<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "index range must be non-empty");
    let n = n as u64;
    // reject the top partial block of 2^64 so every residue is equally likely
    let zone = u64::MAX - (u64::MAX % n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % n) as usize;
        }
    }
}
