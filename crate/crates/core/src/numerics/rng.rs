//! Seeded random streams.
//!
//! The generator is ChaCha8 keyed by the little-endian bytes of the 64-bit
//! seed (remaining key bytes zero, stream 0). All derived draws are defined
//! here rather than delegated to a distribution library, so a seed names the
//! same numbers on every platform and every release:
//!
//! * `next_f32`: `(u32 >> 8) * 2^-24`, in `[0, 1)`.
//! * `next_f64`: `(u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `next_below(n)`: rejection sampling on `u64` words.
//! * Gaussians: Box–Muller on pairs of `next_f64` draws, producing two
//!   normals per pair; a tensor fill consumes pairs in order and discards the
//!   unused partner of an odd-length tail.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent stream for the `index`-th work item of a batch.
    pub fn derive(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f32(&mut self) -> f32 {
        (self.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + self.next_below((hi - lo + 1) as u64) as usize
    }

    /// Uniform `f32` in `[lo, hi)`; exactly `lo` when `lo == hi`.
    pub fn uniform_scalar(&mut self, lo: f32, hi: f32) -> f32 {
        let u = self.next_f32();
        let v = lo + (hi - lo) * u;
        if v >= hi && hi > lo {
            hi.next_down()
        } else {
            v
        }
    }

    fn gaussian_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn next_gaussian(&mut self) -> f64 {
        self.gaussian_pair().0
    }

    fn fill_gaussian(&mut self, n: usize, mean: f32, sigma: f32) -> Vec<f32> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (a, b) = self.gaussian_pair();
            out.push((mean as f64 + sigma as f64 * a) as f32);
            if out.len() < n {
                out.push((mean as f64 + sigma as f64 * b) as f32);
            }
        }
        out
    }
}

/// I.i.d. normal samples. `sigma == 0` yields the constant `mean` without
/// consuming the stream.
pub fn gaussian(rng: &mut Rng, shape: &[usize], mean: f32, sigma: f32) -> Result<Tensor> {
    if !(sigma >= 0.0) || !mean.is_finite() || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian needs finite mean and sigma >= 0, got N({mean}, {sigma}^2)"
        )));
    }
    if sigma == 0.0 {
        return Ok(Tensor::full(shape, mean));
    }
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.fill_gaussian(n, mean, sigma))
}

/// I.i.d. uniform samples in `[lo, hi)`.
pub fn uniform(rng: &mut Rng, shape: &[usize], lo: f32, hi: f32) -> Result<Tensor> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("uniform needs lo <= hi, got [{lo}, {hi})")));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_scalar(lo, hi)).collect();
    Ok(Tensor::from_parts(shape.to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_std(v: &[f32]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn gaussian_zero_sigma_is_constant() {
        let mut rng = Rng::new(1);
        assert_eq!(gaussian(&mut rng, &[3, 4], 0.0, 0.0).unwrap(), Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn same_seed_same_stream() {
        let a = gaussian(&mut Rng::new(99), &[257], 0.0, 1.0).unwrap();
        let b = gaussian(&mut Rng::new(99), &[257], 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let a = uniform(&mut Rng::new(5), &[100], -1.0, 2.0).unwrap();
        let b = uniform(&mut Rng::new(5), &[100], -1.0, 2.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, uniform(&mut Rng::new(6), &[100], -1.0, 2.0).unwrap());
    }

    #[test]
    fn cloned_rng_continues_identically() {
        let mut a = Rng::new(3);
        a.next_u64();
        let mut b = a.clone();
        for _ in 0..10 {
            assert_eq!(a.next_u32(), b.next_u32());
        }
    }

    #[test]
    fn gaussian_moments() {
        let g = gaussian(&mut Rng::new(2024), &[100_000], 0.0, 1.0).unwrap();
        let (m, s) = mean_std(g.data());
        assert!(m.abs() <= 0.02, "mean {m}");
        assert!((s - 1.0).abs() <= 0.02, "std {s}");
    }

    #[test]
    fn uniform_moments_and_range() {
        let u = uniform(&mut Rng::new(77), &[100_000], 0.0, 1.0).unwrap();
        let (m, _) = mean_std(u.data());
        assert!((m - 0.5).abs() <= 0.01, "mean {m}");
        assert!(u.data().iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(uniform(&mut Rng::new(0), &[5], 0.0, 0.0).unwrap(), Tensor::zeros(&[5]));
    }

    #[test]
    fn next_below_covers_range() {
        let mut rng = Rng::new(8);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.next_below(7) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn stream_is_pinned() {
        // Frozen first draws for seed 0; changing the generator breaks
        // every recorded experiment.
        let mut rng = Rng::new(0);
        let got: Vec<u32> = (0..4).map(|_| rng.next_u32()).collect();
        assert_eq!(got, PINNED_SEED0);
    }

    const PINNED_SEED0: [u32; 4] = [804192318, 3594542985, 3904396159, 2711947551];
}
