//! Seeded, portable randomness with fixed conventions.
//!
//! Reproducibility across platforms and library versions is a hard
//! requirement, so every draw is spelled out here instead of delegating to
//! distribution crates whose internals may change: uniforms come from the top
//! 53 bits of a ChaCha12 word, Gaussians from Box-Muller, subset draws from a
//! partial Fisher-Yates shuffle, and parallel work derives independent
//! substreams with SplitMix64.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::num::Scalar;

/// SplitMix64 step; used to mix seeds for independent substreams.
fn splitmix64_value(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic stream generator.
pub struct Prng(ChaCha12Rng);

impl Prng {
    pub fn seed_from(seed: u64) -> Self {
        Prng(ChaCha12Rng::seed_from_u64(seed))
    }

    /// Independent stream addressed by (seed, tag, index).
    ///
    /// The same triple always yields the same stream, regardless of how many
    /// other streams were drawn in between; this is what makes sweep cells
    /// reproducible under any scheduling order.
    pub fn substream(seed: u64, tag: u64, index: u64) -> Self {
        let mut s = seed;
        let a = splitmix64_value(&mut s);
        let mut s2 = a ^ tag.wrapping_mul(0xd1342543de82ef95);
        let b = splitmix64_value(&mut s2);
        let mut s3 = b ^ index.wrapping_mul(0xaf251af3b0f025b5);
        let c = splitmix64_value(&mut s3);
        Prng::seed_from(c)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
    pub fn uniform01<T: Scalar>(&mut self) -> T {
        let bits = self.next_u64() >> 11;
        T::lit(bits as f64 * (1.0 / 9007199254740992.0))
    }

    /// Uniform in (0, 1]; safe under `ln`.
    pub fn uniform_open01<T: Scalar>(&mut self) -> T {
        let bits = (self.next_u64() >> 11) + 1;
        T::lit(bits as f64 * (1.0 / 9007199254740992.0))
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in<T: Scalar>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.uniform01::<T>()
    }

    /// Standard normal pair via Box-Muller. Always consumes two words.
    pub fn normal_pair<T: Scalar>(&mut self) -> (T, T) {
        let u1: f64 = self.uniform_open01();
        let u2: f64 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (T::lit(r * theta.cos()), T::lit(r * theta.sin()))
    }

    /// Standard normal; consumes a full Box-Muller pair and returns its first
    /// element so the stream position never depends on caller history.
    pub fn normal<T: Scalar>(&mut self) -> T {
        self.normal_pair::<T>().0
    }

    /// Rademacher draw: +1 or -1 with equal probability.
    pub fn sign<T: Scalar>(&mut self) -> T {
        if self.next_u64() & 1 == 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    /// Uniform index in [0, n) via 128-bit widening multiply.
    pub fn pick(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let x = self.next_u64() as u128;
        ((x * n as u128) >> 64) as usize
    }

    /// First `k` entries of a Fisher-Yates partial shuffle of 0..n.
    pub fn partial_shuffle(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.pick(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
