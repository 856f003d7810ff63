//! Deterministic seeded random streams.
//!
//! A [`SeedStream`] is identified by `(seed, stream_id)`. Its xoshiro256**
//! state is filled from SplitMix64, keyed by both numbers, so every
//! subsystem of a run (initialisation, shuffling, weight noise, evaluation)
//! draws from its own stream and never perturbs the others.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256StarStar};

/// Well-known stream ids used by the training code.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const DATA: u64 = 5;
    pub const SPLIT: u64 = 6;
}

fn mix(x: u64) -> u64 {
    SplitMix64::seed_from_u64(x).next_u64()
}

/// Source of standard normal variates.
pub trait GaussianSource {
    fn gaussian(&mut self) -> f64;
}

/// Always yields 0. Used to pin sampled weights to their means.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl GaussianSource for ZeroNoise {
    fn gaussian(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct SeedStream {
    seed: u64,
    stream_id: u64,
    rng: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl SeedStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut sm = SplitMix64::seed_from_u64(seed ^ mix(stream_id));
        let mut state = [0u8; 32];
        for chunk in state.chunks_exact_mut(8) {
            chunk.copy_from_slice(&sm.next_u64().to_le_bytes());
        }
        Self {
            seed,
            stream_id,
            rng: Xoshiro256StarStar::from_seed(state),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream derived from this stream's identity and `index`. Does
    /// not consume from `self`, so children can be handed to workers in any
    /// order.
    pub fn child(&self, index: u64) -> SeedStream {
        SeedStream::new(
            self.seed,
            mix(self.stream_id ^ mix(index.wrapping_add(0xC0FF_EE00))),
        )
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw (Box–Muller).
    ///
    /// Draws come in pairs: an odd-numbered call consumes two uniforms
    /// `u₁, u₂` and returns `√(−2 ln(1−u₁))·cos(2πu₂)`; the following call
    /// returns the matching `sin` term without consuming anything.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A shuffled `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

impl GaussianSource for SeedStream {
    fn gaussian(&mut self) -> f64 {
        SeedStream::gaussian(self)
    }
}

/// Standard normal draw from `stream`.
pub fn gaussian_draw(stream: &mut SeedStream) -> f64 {
    stream.gaussian()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_sequence() {
        let mut a = SeedStream::new(7, 3);
        let mut b = SeedStream::new(7, 3);
        for _ in 0..1000 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = SeedStream::new(7, 1);
        let mut b = SeedStream::new(7, 2);
        let mut c = SeedStream::new(8, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn children_are_stable_and_distinct() {
        let parent = SeedStream::new(11, 4);
        let mut c0 = parent.child(0);
        let mut c0b = parent.child(0);
        let mut c1 = parent.child(1);
        let x = c0.next_u64();
        assert_eq!(x, c0b.next_u64());
        assert_ne!(x, c1.next_u64());
    }

    #[test]
    fn gaussian_moments() {
        let mut s = SeedStream::new(2024, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| gaussian_draw(&mut s)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn uniform_range_and_below() {
        let mut s = SeedStream::new(1, 1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(s.below(7) < 7);
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut s = SeedStream::new(5, 5);
        let mut p = s.permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}
