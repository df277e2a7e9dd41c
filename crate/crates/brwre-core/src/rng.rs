//! Counter-based random streams.
//!
//! A stream is ChaCha8 keyed by the master seed with a 64-bit stream id; the
//! keystream position is the counter. Any `(seed, stream, counter)` triple
//! addresses the same 32-bit word on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream-id tags that keep unrelated consumers on disjoint streams.
pub mod tag {
    pub const ENVIRONMENT: u32 = 1;
    pub const TRIAL: u32 = 2;
    pub const PERMUTATION: u32 = 3;
    pub const ENV_DRAW: u32 = 4;
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Stream `index` within the family `tag`.
    pub fn substream(seed: u64, tag: u32, index: u64) -> Self {
        assert!(index < 1 << 40, "substream index out of range");
        Self::new(seed, ((tag as u64) << 40) | index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn set_counter(&mut self, words: u128) {
        self.inner.set_word_pos(words);
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Index drawn from unnormalized non-negative weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        let mut last = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
        last
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One uniform at counter position `index` of stream `(seed, stream)`.
pub fn uniform_at(seed: u64, stream: u64, index: u64) -> f64 {
    let mut r = RngStream::new(seed, stream);
    r.set_counter(2 * index as u128);
    r.uniform()
}
