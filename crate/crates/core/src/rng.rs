//! Reproducible random source.
//!
//! SplitMix64 (state += 0x9e3779b97f4a7c15; output mixed with multipliers
//! 0xbf58476d1ce4e5b9 and 0x94d049bb133111eb, shifts 30/27/31), seeded with
//! the raw 64-bit seed as initial state. Uniforms take the top 53 bits:
//! `u = (x >> 11) * 2^-53`. Normals come from Box-Muller on two consecutive
//! uniforms `(u1, u2)`: `r = sqrt(-2 ln(1 - u1))`, yielding `r cos(2 pi u2)`
//! first and `r sin(2 pi u2)` second. The sequence is portable to any
//! language with 64-bit wrapping integer arithmetic.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct SeededGaussian {
    inner: SplitMix64,
    spare: Option<f64>,
}

impl SeededGaussian {
    pub fn new(seed: u64) -> Self {
        SeededGaussian {
            inner: SplitMix64::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by multiply-shift on a fresh 64-bit draw.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
