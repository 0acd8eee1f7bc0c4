//! Portable seeded randomness.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (`seed_from_u64`).
//! Uniform `f32` values take the top 24 bits of a 64-bit draw, so they lie on
//! the grid `k / 2^24` in `[0, 1)`. Normals use the Box–Muller transform on
//! two uniform `f64` draws (top 53 bits), keeping the unused second variate
//! for the next call.
//!
//! Substreams are derived from `(seed, keys...)` by SplitMix64 mixing alone,
//! so a substream never depends on how much of the parent stream was consumed.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::Tensor;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: Xoshiro256PlusPlus::seed_from_u64(seed), spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator keyed by `keys`, e.g. `(epoch, sample_index)`.
    pub fn substream(&self, keys: &[u64]) -> Rng {
        let mut h = mix64(self.seed ^ GOLDEN);
        for &k in keys {
            h = mix64(h.wrapping_add(GOLDEN) ^ mix64(k.wrapping_add(GOLDEN)));
        }
        Rng::new(h)
    }

    /// Substream keyed by a label, for named consumers such as parameter initialisation.
    pub fn substream_named(&self, label: &str) -> Rng {
        // FNV-1a keeps the key stable across platforms and std versions.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.substream(&[h])
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`, via Lemire's multiply-shift with rejection.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f32) -> bool {
        self.uniform() < p
    }

    /// Standard normal sample.
    pub fn standard_normal(&mut self) -> f32 {
        if let Some(z) = self.spare_normal.take() {
            return z as f32;
        }
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform_f64();
        let u2 = self.uniform_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        (r * theta.cos()) as f32
    }

    pub fn normal(&mut self, mean: f32, std: f32) -> f32 {
        mean + std * self.standard_normal()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn uniform_tensor(&mut self, shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| self.uniform()).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    pub fn normal_tensor(&mut self, shape: &[usize], mean: f32, std: f32) -> Tensor {
        assert!(std >= 0.0, "negative std {std}");
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| self.normal(mean, std)).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }
}
