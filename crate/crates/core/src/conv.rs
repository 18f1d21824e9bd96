//! Circular multi-channel 2D convolution.
//!
//! Every implementation computes cross-correlation with a centred kernel,
//!
//! `Y[c,i,j] = Σ_{d,a,b} W[c,d,a,b] · X[d, (i+a−s) mod n, (j+b−s) mod n]`, `s = (k−1)/2`,
//!
//! either directly ([`conv_spatial`]), per frequency ([`conv_fft`]) or as a
//! dense matrix ([`dense_conv_matrix`]). The dense form vectorizes tensors
//! channel-major, then row-major over space, which is exactly the row-major
//! layout of a `c × n × n` tensor.

use num_complex::Complex;
use num_traits::{Float, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::{FourierBlocks, FourierPlan};
use crate::linalg::{Lu, Matrix};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Largest `n²·max(c_in, c_out)` the dense oracles will build.
pub const ORACLE_LIMIT: usize = 4096;

/// Kernel sizes must be odd so the centre tap is well defined. A kernel that
/// spans the whole grid (`k = n`) is also accepted for even `n`; its centre
/// is then `s = (k−1)/2` rounded down.
pub fn check_kernel_size(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::KernelTooLarge { k, n });
    }
    if k % 2 == 0 && k != n {
        return Err(Error::EvenKernel(k));
    }
    Ok(())
}

/// Weights `c_out × c_in × k × k` bound to the spatial size they act on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel<T: Scalar> {
    taps: Tensor<T>,
    n: usize,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn new(taps: Tensor<T>, n: usize) -> Result<Self> {
        let d = taps.dims();
        if d.len() != 4 || d[2] != d[3] {
            return Err(Error::shape(format!(
                "kernel taps must be c_out x c_in x k x k, got {d:?}"
            )));
        }
        if d[0] == 0 || d[1] == 0 || d[2] == 0 {
            return Err(Error::EmptyTensor);
        }
        check_kernel_size(d[2], n)?;
        Ok(Self { taps, n })
    }

    /// `c`-channel identity (`k = 1`).
    pub fn identity(c: usize, n: usize) -> Self {
        let taps = Tensor::from_parts(
            vec![c, c, 1, 1],
            (0..c * c).map(|i| if i % (c + 1) == 0 { T::one() } else { T::zero() }).collect(),
        );
        Self { taps, n }
    }

    pub fn taps(&self) -> &Tensor<T> {
        &self.taps
    }

    pub fn c_out(&self) -> usize {
        self.taps.dims()[0]
    }

    pub fn c_in(&self) -> usize {
        self.taps.dims()[1]
    }

    pub fn k(&self) -> usize {
        self.taps.dims()[2]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Offset of the centre tap.
    pub fn shift(&self) -> usize {
        (self.k() - 1) / 2
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            taps: self.taps.scaled(c),
            n: self.n,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ConvKernel<U> {
        ConvKernel {
            taps: self.taps.cast(),
            n: self.n,
        }
    }
}

/// `(batch, channels)` of a `c × n × n` or `b × c × n × n` input.
fn split_input(dims: &[usize], c: usize, n: usize) -> Result<usize> {
    match dims {
        [ch, h, w] if *ch == c && *h == n && *w == n => Ok(1),
        [b, ch, h, w] if *ch == c && *h == n && *w == n => Ok(*b),
        _ => Err(Error::shape(format!(
            "expected input {c}x{n}x{n} (optionally batched), got {dims:?}"
        ))),
    }
}

fn output_dims(input: &[usize], c_out: usize) -> Vec<usize> {
    let mut dims = input.to_vec();
    let r = dims.len();
    dims[r - 3] = c_out;
    dims
}

/// Direct spatial evaluation.
pub fn conv_spatial<T: Scalar>(w: &ConvKernel<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (co, ci, k, n) = (w.c_out(), w.c_in(), w.k(), w.n());
    let batch = split_input(x.dims(), ci, n)?;
    let s = w.shift();
    let taps = w.taps().data();
    let xd = x.data();
    let mut out = vec![T::zero(); batch * co * n * n];
    out.par_chunks_mut(co * n * n)
        .zip(xd.par_chunks(ci * n * n))
        .for_each(|(y, x)| {
            for c in 0..co {
                for d in 0..ci {
                    let wk = &taps[(c * ci + d) * k * k..(c * ci + d + 1) * k * k];
                    let xs = &x[d * n * n..(d + 1) * n * n];
                    for i in 0..n {
                        for j in 0..n {
                            let mut acc = T::zero();
                            for a in 0..k {
                                let r = (i + a + n - s) % n;
                                for b in 0..k {
                                    let col = (j + b + n - s) % n;
                                    acc = acc + wk[a * k + b] * xs[r * n + col];
                                }
                            }
                            y[(c * n + i) * n + j] = y[(c * n + i) * n + j] + acc;
                        }
                    }
                }
            }
        });
    Ok(Tensor::from_parts(output_dims(x.dims(), co), out))
}

/// Transforms `x`, maps each frequency's `c_in × batch` matrix through `f`
/// to `c_out × batch`, and transforms back. Returns the real output and the
/// largest discarded imaginary magnitude.
pub(crate) fn apply_per_frequency<T, F>(
    plan: &FourierPlan<T>,
    x: &Tensor<T>,
    c_in: usize,
    c_out: usize,
    f: F,
) -> Result<(Tensor<T>, T)>
where
    T: Scalar,
    F: Fn(usize, Matrix<Complex<T>>) -> Result<Matrix<Complex<T>>> + Sync,
{
    let n = plan.n();
    let batch = split_input(x.dims(), c_in, n)?;
    let freqs = plan.num_freqs();
    let xt = plan.fft2_batch(x)?;
    let xd = xt.data();
    let results: Vec<Matrix<Complex<T>>> = (0..freqs)
        .into_par_iter()
        .map(|p| {
            let xp = Matrix::from_fn(c_in, batch, |ch, b| xd[(b * c_in + ch) * freqs + p]);
            f(p, xp)
        })
        .collect::<Result<_>>()?;
    let mut yd = vec![Complex::zero(); batch * c_out * freqs];
    for (p, yp) in results.iter().enumerate() {
        for ch in 0..c_out {
            for b in 0..batch {
                yd[(b * c_out + ch) * freqs + p] = yp[(ch, b)];
            }
        }
    }
    let mut dims = output_dims(x.dims(), c_out);
    *dims.last_mut().unwrap() = plan.freq_cols();
    plan.ifft2_real(&Tensor::from_parts(dims, yd))
}

fn check_blocks<T: Scalar>(plan: &FourierPlan<T>, blocks: &FourierBlocks<T>) -> Result<()> {
    if plan.n() != blocks.n() || plan.spectrum() != blocks.spectrum() {
        return Err(Error::shape("plan does not match the block representation"));
    }
    Ok(())
}

/// Convolution as one matrix-vector product per frequency. Also returns the
/// largest imaginary magnitude dropped by the inverse transform.
pub fn conv_fft_with_residue<T: Scalar>(
    plan: &FourierPlan<T>,
    blocks: &FourierBlocks<T>,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, T)> {
    check_blocks(plan, blocks)?;
    let b = blocks.blocks();
    apply_per_frequency(plan, x, blocks.c_in(), blocks.c_out(), |p, xp| Ok(b[p].matmul(&xp)))
}

pub fn conv_fft<T: Scalar>(plan: &FourierPlan<T>, blocks: &FourierBlocks<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    conv_fft_with_residue(plan, blocks, x).map(|(y, _)| y)
}

/// Kernel of the adjoint convolution: channels swapped, taps mirrored about
/// the centre.
pub fn conv_transpose<T: Scalar>(w: &ConvKernel<T>) -> ConvKernel<T> {
    let (co, ci, k) = (w.c_out(), w.c_in(), w.k());
    let s = w.shift();
    let src = w.taps().data();
    let mut taps = vec![T::zero(); co * ci * k * k];
    // Offset u = a − s maps to −u, i.e. index (2s − a) mod k.
    let mirror = |a: usize| (2 * s + k - a) % k;
    for c in 0..co {
        for d in 0..ci {
            for a in 0..k {
                for b in 0..k {
                    taps[((d * co + c) * k + mirror(a)) * k + mirror(b)] = src[((c * ci + d) * k + a) * k + b];
                }
            }
        }
    }
    ConvKernel {
        taps: Tensor::from_parts(vec![ci, co, k, k], taps),
        n: w.n(),
    }
}

/// Applies the inverse convolution by solving against every block.
///
/// A block is rejected as [`Error::Singular`] (naming the first offending
/// frequency) when `max_q ‖B_q‖₁ · ‖B_p⁻¹‖₁`, the one-norm condition
/// estimate of the whole operator restricted to that frequency, exceeds
/// `1/ε` of the working precision.
pub fn conv_inverse_apply<T: Scalar>(
    plan: &FourierPlan<T>,
    blocks: &FourierBlocks<T>,
    y: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_blocks(plan, blocks)?;
    if blocks.c_in() != blocks.c_out() {
        return Err(Error::shape(format!(
            "inverse needs square blocks, got {}x{}",
            blocks.c_out(),
            blocks.c_in()
        )));
    }
    let limit = T::one() / T::epsilon();
    let scale = blocks
        .blocks()
        .iter()
        .map(Matrix::norm_one)
        .fold(T::zero(), Float::max);
    let attempts: Vec<Result<Lu<Complex<T>>>> = blocks
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(index, b)| {
            let lu = Lu::new(b).map_err(|_| Error::Singular { index })?;
            let cond = scale * lu.inverse().norm_one();
            if !(cond <= limit) {
                return Err(Error::Singular { index });
            }
            Ok(lu)
        })
        .collect();
    let factors = attempts.into_iter().collect::<Result<Vec<_>>>()?;
    let c = blocks.c_in();
    apply_per_frequency(plan, y, c, c, |p, yp| Ok(factors[p].solve_matrix(&yp))).map(|(x, _)| x)
}

/// Explicit `(c_out·n²) × (c_in·n²)` matrix of a convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseConvMatrix<T: Scalar> {
    pub n: usize,
    pub c_out: usize,
    pub c_in: usize,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> DenseConvMatrix<T> {
    pub fn matvec(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.len() != self.matrix.cols() {
            return Err(Error::shape(format!(
                "dense matrix has {} columns, input has {} entries",
                self.matrix.cols(),
                x.len()
            )));
        }
        Ok(Tensor::from_parts(
            vec![self.c_out, self.n, self.n],
            self.matrix.matvec(x.data()),
        ))
    }

    pub fn transpose(&self) -> Self {
        Self {
            n: self.n,
            c_out: self.c_in,
            c_in: self.c_out,
            matrix: self.matrix.transpose(),
        }
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_parts(
            vec![self.matrix.rows(), self.matrix.cols()],
            self.matrix.data().to_vec(),
        )
    }
}

pub(crate) fn check_oracle_size(n: usize, c_in: usize, c_out: usize) -> Result<()> {
    let size = n * n * c_in.max(c_out);
    if size > ORACLE_LIMIT {
        return Err(Error::OracleLimit {
            size,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(())
}

/// Builds the doubly block-circulant matrix tap by tap.
pub fn dense_conv_matrix<T: Scalar>(w: &ConvKernel<T>) -> Result<DenseConvMatrix<T>> {
    let (co, ci, k, n) = (w.c_out(), w.c_in(), w.k(), w.n());
    check_oracle_size(n, ci, co)?;
    let s = w.shift();
    let nn = n * n;
    let taps = w.taps().data();
    let mut m = Matrix::zeros(co * nn, ci * nn);
    for c in 0..co {
        for d in 0..ci {
            for i in 0..n {
                for j in 0..n {
                    let row = c * nn + i * n + j;
                    for a in 0..k {
                        for b in 0..k {
                            let col = d * nn + ((i + a + n - s) % n) * n + (j + b + n - s) % n;
                            m[(row, col)] += taps[((c * ci + d) * k + a) * k + b];
                        }
                    }
                }
            }
        }
    }
    Ok(DenseConvMatrix {
        n,
        c_out: co,
        c_in: ci,
        matrix: m,
    })
}

/// Largest relative entrywise error, for comparisons across implementations.
pub fn relative_error<T: Scalar>(got: &Tensor<T>, want: &Tensor<T>) -> Result<T> {
    let scale = want.max_abs().max(T::min_positive_value());
    Ok(got.max_abs_diff(want)? / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::kernel_to_blocks;
    use crate::rng::SeededRng;

    fn kernel(seed: u64, co: usize, ci: usize, k: usize, n: usize) -> ConvKernel<f64> {
        ConvKernel::new(SeededRng::new(seed).normal_tensor(&[co, ci, k, k]), n).unwrap()
    }

    #[test]
    fn kernel_validation() {
        let t = |k| Tensor::<f64>::zeros(&[1, 1, k, k]);
        assert!(matches!(ConvKernel::new(t(2), 5), Err(Error::EvenKernel(2))));
        assert!(matches!(ConvKernel::new(t(5), 3), Err(Error::KernelTooLarge { k: 5, n: 3 })));
        assert!(ConvKernel::new(t(4), 4).is_ok());
        assert!(ConvKernel::new(Tensor::<f64>::zeros(&[1, 1, 3, 2]), 4).is_err());
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x: Tensor<f64> = SeededRng::new(1).normal_tensor(&[1, 5, 5]);
        let mut taps = vec![0.0; 9];
        taps[4] = 1.0;
        let w = ConvKernel::new(Tensor::new(vec![1, 1, 3, 3], taps).unwrap(), 5).unwrap();
        assert_eq!(conv_spatial(&w, &x).unwrap(), x);
        let plan = FourierPlan::full(5).unwrap();
        let y = conv_fft(&plan, &kernel_to_blocks(&w, &plan).unwrap(), &x).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn ones_kernel_sums_taps() {
        let w = ConvKernel::new(Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap(), 4).unwrap();
        let y = conv_spatial(&w, &Tensor::new(vec![1, 4, 4], vec![1.0; 16]).unwrap()).unwrap();
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn cross_correlation_direction() {
        // Tap right of centre reads the pixel to the right.
        let mut taps = vec![0.0; 9];
        taps[5] = 1.0;
        let w = ConvKernel::new(Tensor::new(vec![1, 1, 3, 3], taps).unwrap(), 4).unwrap();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(f64::from).collect()).unwrap();
        let y = conv_spatial(&w, &x).unwrap();
        assert_eq!(y.data()[0], 1.0);
        assert_eq!(y.data()[3], 0.0);
    }

    #[test]
    fn spatial_rejects_wrong_input() {
        let w = kernel(1, 2, 3, 3, 5);
        assert!(conv_spatial(&w, &Tensor::zeros(&[2, 5, 5])).is_err());
        assert!(conv_spatial(&w, &Tensor::zeros(&[3, 4, 4])).is_err());
    }

    #[test]
    fn symmetric_kernel_is_self_transpose() {
        let taps = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let w = ConvKernel::new(Tensor::new(vec![1, 1, 3, 3], taps).unwrap(), 4).unwrap();
        assert_eq!(conv_transpose(&w), w);
    }

    #[test]
    fn transpose_is_an_involution() {
        let w = kernel(3, 2, 3, 3, 6);
        assert_eq!(conv_transpose(&conv_transpose(&w)), w);
        let full = kernel(4, 2, 2, 4, 4);
        assert_eq!(conv_transpose(&conv_transpose(&full)), full);
    }

    #[test]
    fn scalar_inverse_halves() {
        let w = ConvKernel::new(Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap(), 4).unwrap();
        let plan = FourierPlan::full(4).unwrap();
        let y: Tensor<f64> = SeededRng::new(5).normal_tensor(&[1, 4, 4]);
        let x = conv_inverse_apply(&plan, &kernel_to_blocks(&w, &plan).unwrap(), &y).unwrap();
        assert!(x.max_abs_diff(&y.scaled(0.5)).unwrap() < 1e-15);
    }

    #[test]
    fn singular_kernel_names_frequency() {
        // All-ones 3x3 kernel on n=3 vanishes at every non-zero frequency.
        let w = ConvKernel::new(Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap(), 3).unwrap();
        let plan = FourierPlan::full(3).unwrap();
        let err = conv_inverse_apply(&plan, &kernel_to_blocks(&w, &plan).unwrap(), &Tensor::zeros(&[1, 3, 3])).unwrap_err();
        assert!(matches!(err, Error::Singular { index: 1 }), "{err}");
    }

    #[test]
    fn dense_identity() {
        let d = dense_conv_matrix(&ConvKernel::<f64>::identity(1, 2)).unwrap();
        assert_eq!(d.matrix, Matrix::identity(4));
    }

    #[test]
    fn dense_guardrail() {
        let w = ConvKernel::<f64>::identity(65, 8);
        assert!(matches!(dense_conv_matrix(&w), Err(Error::OracleLimit { size: 4160, .. })));
    }

    #[test]
    fn batched_input_matches_single() {
        let w = kernel(6, 2, 3, 3, 4);
        let plan = FourierPlan::half(4).unwrap();
        let blocks = kernel_to_blocks(&w, &plan).unwrap();
        let xb: Tensor<f64> = SeededRng::new(7).normal_tensor(&[2, 3, 4, 4]);
        let yb = conv_fft(&plan, &blocks, &xb).unwrap();
        let ys = conv_spatial(&w, &xb).unwrap();
        assert!(yb.max_abs_diff(&ys).unwrap() < 1e-12);
        assert_eq!(yb.dims(), &[2, 2, 4, 4]);
    }
}
