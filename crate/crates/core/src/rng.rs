//! Labelled deterministic random streams.
//!
//! A stream is a ChaCha8 generator keyed by the run seed, with the ChaCha
//! stream id derived from a text label. Work that runs in parallel asks for its
//! own labelled stream instead of sharing one generator, which keeps outputs
//! independent of scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to turn labels into stream ids. Stable across platforms
/// and toolchains, unlike `DefaultHasher`.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(label_hash(label));
        Self { seed, inner }
    }

    /// A fresh stream with the same seed and a different label.
    pub fn fork(&self, label: &str) -> Self {
        Self::new(self.seed, label)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[lo, hi)`; returns `lo` exactly when `lo == hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.inner.random();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }

    /// Uniform in `[-bound, bound)`; zero when `bound == 0`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        if bound == 0.0 {
            let _: f64 = self.inner.random();
            0.0
        } else {
            self.uniform(-bound, bound)
        }
    }

    /// Uniform index in `0..len`. Panics when `len == 0`.
    pub fn index(&mut self, len: usize) -> usize {
        self.inner.random_range(0..len)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random()
    }

    pub fn rng(&mut self) -> &mut impl RngCore {
        &mut self.inner
    }
}
