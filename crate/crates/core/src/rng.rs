//! Seeded randomness: xoshiro256** generator plus Box–Muller normals.
//!
//! The generator and every derived draw are pinned down exactly so that an
//! independent implementation can reproduce seeded runs bit for bit:
//!
//! - a 64-bit seed expands to the 256-bit state via four successive
//!   SplitMix64 outputs;
//! - `next_f64` maps the top 53 bits of `next_u64` to `[0, 1)`;
//! - `next_normal` draws `u1 in (0, 1]` (top 53 bits plus one) and
//!   `u2 in [0, 1)`, consuming exactly two `u64` draws, and returns
//!   `sqrt(-2 ln u1) * cos(2 pi u2)` — no second-variate caching.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// xoshiro256** seeded from a 64-bit value by SplitMix64 expansion.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { state, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by modulo reduction.
    ///
    /// The tiny modulo bias is irrelevant here; what matters is that the
    /// mapping is fixed.
    pub fn next_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Standard normal via Box–Muller (cosine branch, two draws per call).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Child generator seeded from this one; successive splits are
    /// independent streams under a fixed call order.
    pub fn split(&mut self) -> SeededRng {
        SeededRng::new(self.next_u64())
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Draws `mean + chol_cov * z` with `z` standard normal.
///
/// `chol_cov` must be lower-triangular with a nonnegative diagonal; a zero
/// factor degenerates to the mean exactly.
pub fn gaussian_sample(rng: &mut SeededRng, mean: &Tensor, chol_cov: &Tensor) -> Result<Tensor> {
    let d = mean.len();
    if chol_cov.shape() != [d, d] {
        return Err(Error::Dimension(format!(
            "cholesky factor shape {:?} does not match mean dim {}",
            chol_cov.shape(),
            d
        )));
    }
    for i in 0..d {
        for j in 0..d {
            let v = chol_cov.at(i, j);
            if j > i && v != 0.0 {
                return Err(Error::Precondition(format!(
                    "cholesky factor not lower-triangular at ({}, {})",
                    i, j
                )));
            }
            if j == i && v < 0.0 {
                return Err(Error::Precondition(format!(
                    "cholesky factor has negative diagonal at {}",
                    i
                )));
            }
        }
    }
    let z: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
    let mut out = mean.data().to_vec();
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += chol_cov.at(i, j) * z[j];
        }
        out[i] += acc;
    }
    Ok(Tensor::vector(out))
}
