use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic generator behind every synthetic bundle.
///
/// * stream: ChaCha with 8 rounds, seeded through `SeedableRng::seed_from_u64`
///   (PCG32 expansion of the `u64` into the 32-byte key);
/// * `uniform`: `(next_u64 >> 11) · 2⁻⁵³`, in `[0, 1)`;
/// * `normal`: Box–Muller cosine branch, `sqrt(−2 ln(1 − u₁)) · cos(2π u₂)`,
///   two uniforms per sample, the sine branch is discarded;
/// * `below(n)`: `(next_u64 · n) >> 64` in 128-bit arithmetic.
#[derive(Debug, Clone)]
pub struct ToyRng {
    inner: ChaCha8Rng,
}

impl ToyRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}
