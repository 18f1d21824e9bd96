//! Deterministic random generation.
//!
//! All randomness comes from SplitMix64: the state advances by
//! `0x9e3779b97f4a7c15` per draw and is finalized with
//! `z = (z ^ z>>30) * 0xbf58476d1ce4e5b9; z = (z ^ z>>27) * 0x94d049bb133111eb; z ^ z>>31`.
//! The seed is the initial state verbatim. Uniform doubles take the top 53
//! bits (`(u >> 11) * 2^-53`), and normals use the Box–Muller cosine branch
//! `sqrt(-2 ln(1 - u1)) * cos(2π u2)`, one normal per pair of uniforms.
//! Values are drawn in `f64` and rounded to the target precision, so `f32`
//! and `f64` tensors from the same seed agree up to rounding.

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: SplitMix64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vec<T: Scalar>(&mut self, len: usize) -> Vec<T> {
        (0..len).map(|_| T::lit(self.normal())).collect()
    }

    /// Tensor of independent standard normals.
    pub fn normal_tensor<T: Scalar>(&mut self, dims: &[usize]) -> Tensor<T> {
        let len = dims.iter().product();
        Tensor::from_parts(dims.to_vec(), self.normal_vec(len))
    }

    /// Normal tensor rescaled to unit Frobenius norm.
    pub fn unit_tensor<T: Scalar>(&mut self, dims: &[usize]) -> Tensor<T> {
        let len: usize = dims.iter().product();
        let raw: Vec<f64> = (0..len).map(|_| self.normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let data = raw.iter().map(|v| T::lit(v / norm)).collect();
        Tensor::from_parts(dims.to_vec(), data)
    }
}

/// Seed for the `index`-th independent stream under `master`.
///
/// Derived seeds make per-trial results independent of how trials are
/// scheduled across threads.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut mix = SplitMix64::seed_from_u64(master ^ index.wrapping_mul(0xd1b54a32d192ed03));
    mix.next_u64()
}
