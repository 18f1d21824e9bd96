//! Lipschitz-constrained convolution baselines and the norm-preservation check.
//!
//! * exact singular values of a convolution from its Fourier blocks;
//! * OSSN: power iteration with the convolution and its transpose;
//! * SVCM: alternating projections between orthogonal convolutions
//!   (per-frequency singular values set to one) and `k × k` kernels;
//! * RKO / CRKO: orthogonalizing the `c_out × k²c_in` reshaped kernel with
//!   Björck iteration or the Cayley transform.

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::{cayley_semi, CayleyConv, CayleyConvParams};
use crate::conv::{conv_fft, conv_transpose, ConvKernel};
use crate::error::{Error, Result};
use crate::fourier::{blocks_to_kernel, kernel_to_blocks, FourierPlan, Spectrum};
use crate::linalg::{polar_factor, singular_values, spectral_norm_estimate, Matrix};
use crate::rng::{derive_seed, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// All singular values of a convolution operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport<T: Scalar> {
    /// Descending, `min(c_out, c_in)·n²` entries.
    pub singular_values: Vec<T>,
    pub sigma_max: T,
    pub sigma_min: T,
    pub n: usize,
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
}

/// Exact singular values: the union of the singular values of every
/// Fourier block.
pub fn conv_singular_values<T: Scalar>(w: &ConvKernel<T>) -> Result<SpectrumReport<T>> {
    let plan = FourierPlan::full(w.n())?;
    let blocks = kernel_to_blocks(w, &plan)?;
    let mut sv: Vec<T> = blocks
        .blocks()
        .par_iter()
        .flat_map_iter(singular_values)
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(SpectrumReport {
        sigma_max: sv.first().copied().unwrap_or_else(T::zero),
        sigma_min: sv.last().copied().unwrap_or_else(T::zero),
        singular_values: sv,
        n: w.n(),
        c_out: w.c_out(),
        c_in: w.c_in(),
        k: w.k(),
    })
}

/// `max |σ − 1|` over the whole spectrum.
pub fn spectral_deviation<T: Scalar>(w: &ConvKernel<T>) -> Result<T> {
    let report = conv_singular_values(w)?;
    Ok(report
        .singular_values
        .iter()
        .fold(T::zero(), |m, &s| m.max(Float::abs(s - T::one()))))
}

/// Power-method estimate of the largest singular value: iterates
/// `s ← Wᵀ W s / ‖Wᵀ W s‖` from a seeded random unit tensor and returns
/// `‖W s‖ / ‖s‖`.
pub fn ossn_sigma_max<T: Scalar>(w: &ConvKernel<T>, iters: usize, seed: u64) -> Result<T> {
    if iters == 0 {
        return Err(Error::InvalidArgument("power iteration needs at least one step".into()));
    }
    let plan = FourierPlan::full(w.n())?;
    let forward = kernel_to_blocks(w, &plan)?;
    let backward = kernel_to_blocks(&conv_transpose(w), &plan)?;
    let n = w.n();
    let mut s: Tensor<T> = SeededRng::new(seed).unit_tensor(&[w.c_in(), n, n]);
    for _ in 0..iters {
        let next = conv_fft(&plan, &backward, &conv_fft(&plan, &forward, &s)?)?;
        let norm = next.frobenius_norm()?;
        if norm == T::zero() {
            return Ok(T::zero());
        }
        s = next.scaled(T::one() / norm);
    }
    Ok(conv_fft(&plan, &forward, &s)?.frobenius_norm()? / s.frobenius_norm()?)
}

/// Divides the kernel by its power-method spectral norm estimate.
pub fn ossn_normalize<T: Scalar>(w: &ConvKernel<T>, iters: usize, seed: u64) -> Result<ConvKernel<T>> {
    let sigma = ossn_sigma_max(w, iters, seed)?;
    if sigma < T::lit(1e-12) {
        return Err(Error::DegenerateSigma(sigma.as_f64()));
    }
    Ok(w.scaled(T::one() / sigma))
}

/// Result of singular value clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcmResult<T: Scalar> {
    pub kernel: ConvKernel<T>,
    /// `deviations[i]` is `max |σ − 1|` of the kernel after iteration `i + 1`.
    pub deviations: Vec<T>,
}

/// Alternates a per-frequency projection onto orthogonal convolutions (all
/// singular values set to one) with truncation back to the `k × k` support.
pub fn svcm_clip<T: Scalar>(w: &ConvKernel<T>, iters: usize) -> Result<SvcmResult<T>> {
    if iters == 0 {
        return Err(Error::InvalidArgument("clipping needs at least one iteration".into()));
    }
    let plan = FourierPlan::full(w.n())?;
    let (co, ci, k) = (w.c_out(), w.c_in(), w.k());
    let mut kernel = w.clone();
    let mut deviations = Vec::with_capacity(iters);
    for _ in 0..iters {
        let clipped = kernel_to_blocks(&kernel, &plan)?.map_blocks(co, ci, polar_factor)?;
        kernel = blocks_to_kernel(&clipped, k, &plan)?;
        deviations.push(spectral_deviation(&kernel)?);
    }
    Ok(SvcmResult { kernel, deviations })
}

/// Björck orthogonalization `A ← A(I + β(I − AᵀA))` of a real matrix (rows
/// instead of columns for wide input).
///
/// The input is first divided by a power-method estimate of its spectral
/// norm when that exceeds one. Iteration stops early once
/// `max |AᵀA − I| ≤ 16·ε·dim`, and fails if that defect grows three
/// iterations in a row.
pub fn bjorck_orthogonalize<T: Scalar>(m: &Matrix<T>, iters: usize, beta: T) -> Result<Matrix<T>> {
    if m.rows() < m.cols() {
        return Ok(bjorck_orthogonalize(&m.transpose(), iters, beta)?.transpose());
    }
    let sigma = spectral_norm_estimate(m, 100);
    let mut a = if sigma > T::one() {
        m.scaled(T::one() / sigma)
    } else {
        m.clone()
    };
    let dim = a.cols();
    let eye = Matrix::identity(dim);
    let tol = T::lit(16.0 * dim as f64) * T::epsilon();
    let mut last = T::infinity();
    let mut growth = 0;
    for it in 0..iters {
        let gram = a.transpose().matmul(&a);
        let residual = eye.sub(&gram);
        let defect = residual.data().iter().fold(T::zero(), |acc, &v| acc.max(Float::abs(v)));
        if defect <= tol {
            break;
        }
        if defect > last {
            growth += 1;
            if growth >= 3 {
                return Err(Error::Divergence(it));
            }
        } else {
            growth = 0;
        }
        last = defect;
        a = a.matmul(&eye.add(&residual.scaled(beta)));
    }
    Ok(a)
}

/// Orthogonalization used by [`rko`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkoMethod {
    Bjorck,
    Cayley,
}

/// Björck iterations used by RKO.
pub const RKO_BJORCK_ITERS: usize = 100;

/// Orthogonalizes the `c_out × (c_in·k²)` reshaped kernel and scales the taps
/// by `1/k`. An orthogonal reshaped matrix bounds the convolution's spectral
/// norm by `k`, so the scaled kernel has spectral norm at most one.
pub fn rko<T: Scalar>(w: &ConvKernel<T>, method: RkoMethod) -> Result<ConvKernel<T>> {
    let (co, ci, k) = (w.c_out(), w.c_in(), w.k());
    let reshaped = Matrix::from_vec(co, ci * k * k, w.taps().data().to_vec())?;
    let ortho = match method {
        RkoMethod::Bjorck => bjorck_orthogonalize(&reshaped, RKO_BJORCK_ITERS, T::lit(0.5))?,
        RkoMethod::Cayley => cayley_semi(&reshaped)?,
    };
    let scale = T::one() / T::lit(k as f64);
    let taps = Tensor::new(vec![co, ci, k, k], ortho.into_data())?.scaled(scale);
    ConvKernel::new(taps, w.n())
}

/// Layer whose norm preservation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerMethod {
    Cayley,
    Rko,
    Crko,
    Ossn,
    Svcm,
}

impl std::str::FromStr for LayerMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cayley" => LayerMethod::Cayley,
            "rko" => LayerMethod::Rko,
            "crko" => LayerMethod::Crko,
            "ossn" => LayerMethod::Ossn,
            "svcm" => LayerMethod::Svcm,
            other => return Err(format!("unknown method `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub method: LayerMethod,
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Power iterations for OSSN.
    pub ossn_iters: usize,
    /// Projections for SVCM.
    pub svcm_iters: usize,
    /// Inputs pushed through the layer per batch.
    pub batch: usize,
    pub half_spectrum: bool,
}

impl VerifyConfig {
    pub fn new(method: LayerMethod, c_in: usize, c_out: usize, n: usize, k: usize) -> Self {
        Self {
            method,
            c_in,
            c_out,
            n,
            k,
            trials: 1000,
            seed: 0,
            ossn_iters: 100,
            svcm_iters: 50,
            batch: 50,
            half_spectrum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub const BINS: usize = 20;

    fn build(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0; Self::BINS];
        let width = (hi - lo) / Self::BINS as f64;
        for &v in values {
            let bin = if width > 0.0 {
                (((v - lo) / width) as usize).min(Self::BINS - 1)
            } else {
                0
            };
            counts[bin] += 1;
        }
        Self { lo, hi, counts }
    }
}

/// Statistics of `‖layer(x)‖ / ‖x‖` over random unit inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub trials: usize,
    pub histogram: Histogram,
    /// Largest imaginary magnitude discarded by the inverse transform.
    pub max_imag_residue: f64,
    /// SVCM `max |σ − 1|` per iteration; empty for other methods.
    pub deviations: Vec<f64>,
}

enum Layer<T: Scalar> {
    Cayley(CayleyConv<T>),
    Conv(crate::fourier::FourierBlocks<T>),
}

/// Builds the configured layer from a seeded random kernel and measures how
/// well it preserves the norm of seeded random unit inputs.
pub fn verify_norm_preservation<T: Scalar>(cfg: &VerifyConfig) -> Result<NormReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = cfg.n;
    let spectrum = if cfg.half_spectrum { Spectrum::Half } else { Spectrum::Full };
    let plan = FourierPlan::<T>::new(n, spectrum)?;
    let raw: Tensor<T> = SeededRng::new(cfg.seed).normal_tensor(&[cfg.c_out, cfg.c_in, cfg.k, cfg.k]);
    let mut deviations = Vec::new();
    let layer = match cfg.method {
        LayerMethod::Cayley => Layer::Cayley(CayleyConv::new(&CayleyConvParams::new(raw, T::one(), n)?, &plan)?),
        method => {
            let w = ConvKernel::new(raw, n)?;
            let kernel = match method {
                LayerMethod::Rko => rko(&w, RkoMethod::Bjorck)?,
                LayerMethod::Crko => rko(&w, RkoMethod::Cayley)?,
                LayerMethod::Ossn => ossn_normalize(&w, cfg.ossn_iters, derive_seed(cfg.seed, u64::MAX))?,
                _ => {
                    let out = svcm_clip(&w, cfg.svcm_iters)?;
                    deviations = out.deviations.iter().map(|d| d.as_f64()).collect();
                    out.kernel
                }
            };
            Layer::Conv(kernel_to_blocks(&kernel, &plan)?)
        }
    };

    let batch = cfg.batch.max(1);
    let mut ratios = Vec::with_capacity(cfg.trials);
    let mut residue = 0.0f64;
    for start in (0..cfg.trials).step_by(batch) {
        let count = batch.min(cfg.trials - start);
        let mut data = Vec::with_capacity(count * cfg.c_in * n * n);
        for t in start..start + count {
            let x: Tensor<T> = SeededRng::new(derive_seed(cfg.seed, t as u64)).unit_tensor(&[cfg.c_in, n, n]);
            data.extend_from_slice(x.data());
        }
        let x = Tensor::new(vec![count, cfg.c_in, n, n], data)?;
        let (y, r) = match &layer {
            Layer::Cayley(l) => l.apply_with_residue(&x)?,
            Layer::Conv(blocks) => crate::conv::conv_fft_with_residue(&plan, blocks, &x)?,
        };
        residue = residue.max(r.as_f64());
        let (xs, ys) = (cfg.c_in * n * n, cfg.c_out * n * n);
        for b in 0..count {
            let xn = norm_f64(&x.data()[b * xs..(b + 1) * xs]);
            let yn = norm_f64(&y.data()[b * ys..(b + 1) * ys]);
            ratios.push(yn / xn);
        }
    }
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(NormReport {
        min_ratio,
        max_ratio,
        mean_ratio,
        trials: cfg.trials,
        histogram: Histogram::build(&ratios),
        max_imag_residue: residue,
        deviations,
    })
}

fn norm_f64<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_kernel(v: f64, n: usize) -> ConvKernel<f64> {
        ConvKernel::new(Tensor::new(vec![1, 1, 1, 1], vec![v]).unwrap(), n).unwrap()
    }

    fn random_kernel(seed: u64, co: usize, ci: usize, k: usize, n: usize) -> ConvKernel<f64> {
        ConvKernel::new(SeededRng::new(seed).normal_tensor(&[co, ci, k, k]), n).unwrap()
    }

    #[test]
    fn scalar_and_identity_spectra() {
        let r = conv_singular_values(&scalar_kernel(2.0, 4)).unwrap();
        assert_eq!(r.singular_values.len(), 16);
        assert!(r.singular_values.iter().all(|&s| (s - 2.0).abs() < 1e-15));
        let r = conv_singular_values(&ConvKernel::<f64>::identity(3, 4)).unwrap();
        assert_eq!(r.singular_values.len(), 48);
        assert!(r.singular_values.iter().all(|&s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn spectrum_length_uses_smaller_channel_count() {
        let r = conv_singular_values(&random_kernel(1, 2, 5, 3, 4)).unwrap();
        assert_eq!(r.singular_values.len(), 2 * 16);
        assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(r.sigma_max, r.singular_values[0]);
    }

    #[test]
    fn ossn_on_trivial_kernels() {
        assert!((ossn_sigma_max(&scalar_kernel(2.0, 4), 1, 0).unwrap() - 2.0).abs() < 1e-14);
        let id = ConvKernel::<f64>::identity(2, 4);
        assert!((ossn_sigma_max(&id, 3, 0).unwrap() - 1.0).abs() < 1e-14);
        let normalized = ossn_normalize(&scalar_kernel(2.0, 4), 10, 0).unwrap();
        assert!((normalized.taps().data()[0] - 1.0).abs() < 1e-14);
        assert!(ossn_sigma_max(&id, 0, 0).is_err());
        assert!(matches!(ossn_normalize(&scalar_kernel(0.0, 4), 5, 0), Err(Error::DegenerateSigma(_))));
    }

    #[test]
    fn svcm_full_support_converges_in_one_step() {
        let w = random_kernel(2, 2, 2, 5, 5);
        let out = svcm_clip(&w, 1).unwrap();
        assert!(out.deviations[0] < 1e-10);
    }

    #[test]
    fn svcm_fixed_point() {
        // A full-support orthogonal kernel: the Cayley layer's response.
        let params = CayleyConvParams::new(SeededRng::new(3).normal_tensor(&[2, 2, 3, 3]), 1.0, 5).unwrap();
        let plan = FourierPlan::full(5).unwrap();
        let q = CayleyConv::new(&params, &plan).unwrap().orthogonal_blocks().unwrap();
        let w = blocks_to_kernel(&q, 5, &plan).unwrap();
        assert!(spectral_deviation(&w).unwrap() < 1e-12);
        let out = svcm_clip(&w, 3).unwrap();
        assert!(out.deviations.iter().all(|&d| d < 1e-10));
        assert!(out.kernel.taps().max_abs_diff(w.taps()).unwrap() < 1e-10);
    }

    #[test]
    fn bjorck_trivial_inputs() {
        let mut rng = SeededRng::new(4);
        let q = polar_factor(&Matrix::from_vec(4, 3, rng.normal_vec::<f64>(12)).unwrap());
        let out = bjorck_orthogonalize(&q, 30, 0.5).unwrap();
        assert!(out.max_abs_diff(&q) < 1e-12);
        let two = Matrix::<f64>::identity(3).scaled(2.0);
        let out = bjorck_orthogonalize(&two, 30, 0.5).unwrap();
        assert!(out.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    }

    #[test]
    fn bjorck_detects_divergence() {
        // β far too large: the iteration overshoots and blows up.
        let m = Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.2, 0.7]).unwrap();
        assert!(matches!(bjorck_orthogonalize(&m, 50, 5.0), Err(Error::Divergence(_))));
    }

    #[test]
    fn rko_with_unit_kernel_is_exact() {
        let w = random_kernel(5, 2, 3, 1, 4);
        for method in [RkoMethod::Bjorck, RkoMethod::Cayley] {
            let r = conv_singular_values(&rko(&w, method).unwrap()).unwrap();
            assert!(r.singular_values.iter().all(|&s| (s - 1.0).abs() < 1e-10), "{method:?}");
        }
    }

    #[test]
    fn rko_and_crko_bound_spectral_norm() {
        let w = random_kernel(6, 2, 2, 3, 8);
        let a = rko(&w, RkoMethod::Bjorck).unwrap();
        let b = rko(&w, RkoMethod::Cayley).unwrap();
        assert!(conv_singular_values(&a).unwrap().sigma_max <= 1.0 + 1e-3);
        assert!(conv_singular_values(&b).unwrap().sigma_max <= 1.0 + 1e-3);
        assert!(a.taps().max_abs_diff(b.taps()).unwrap() > 1e-3);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = Histogram::build(&[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[Histogram::BINS - 1], 1);
        let flat = Histogram::build(&[0.5; 3]);
        assert_eq!(flat.counts[0], 3);
    }

    #[test]
    fn verify_rejects_zero_trials() {
        let mut cfg = VerifyConfig::new(LayerMethod::Cayley, 2, 2, 4, 3);
        cfg.trials = 0;
        assert!(verify_norm_preservation::<f64>(&cfg).is_err());
    }

    #[test]
    fn verify_small_configurations() {
        for method in [LayerMethod::Cayley, LayerMethod::Rko, LayerMethod::Crko, LayerMethod::Ossn, LayerMethod::Svcm] {
            let mut cfg = VerifyConfig::new(method, 2, 2, 4, 3);
            cfg.trials = 20;
            cfg.svcm_iters = 5;
            let r = verify_norm_preservation::<f64>(&cfg).unwrap();
            // Truncated SVCM only approximates the constraint.
            if method != LayerMethod::Svcm {
                assert!(r.max_ratio <= 1.0 + 1e-3, "{method:?}: {}", r.max_ratio);
            } else {
                assert_eq!(r.deviations.len(), 5);
            }
            assert_eq!(r.histogram.counts.iter().sum::<usize>(), 20);
            if method == LayerMethod::Cayley {
                assert!(r.min_ratio >= 1.0 - 1e-10);
            }
        }
    }
}
