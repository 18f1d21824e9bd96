//! Batched 2D DFTs over the last two tensor dims and the per-frequency block
//! representation of a multi-channel circular convolution.
//!
//! Conventions:
//!
//! * The forward transform is unnormalized and the inverse carries the full
//!   `1/n²`. A unitary transform would only rescale every block by a common
//!   constant, and the Cayley transform of a skew-Hermitian matrix is unitary
//!   whatever that scale, so orthogonality results are unaffected.
//! * Blocks are the *conjugated* kernel spectrum, which makes the block
//!   product implement deep-learning cross-correlation (see
//!   [`crate::conv::conv_spatial`]).
//! * The centre tap of a `k × k` kernel sits at spatial offset `(0, 0)` of
//!   the circular grid.
//! * The block-diagonal form is stored directly as one `c_out × c_in` matrix
//!   per frequency; the channel/frequency regrouping done while building
//!   [`FourierBlocks`] is the perfect-shuffle permutation, which is never
//!   materialized.

use std::sync::Arc;

use num_complex::Complex;
use num_traits::{Float, Zero};
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::conv::ConvKernel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{Field, Scalar};
use crate::tensor::{Tensor, TensorC};

/// Which frequencies are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spectrum {
    /// All `n²` frequencies.
    Full,
    /// The `n·(⌊n/2⌋+1)` frequencies of a real-input transform; the rest
    /// follow from conjugate symmetry.
    Half,
}

/// Precomputed 1D transforms for `n × n` images.
#[derive(Clone)]
pub struct FourierPlan<T: Scalar> {
    n: usize,
    spectrum: Spectrum,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
}

impl<T: Scalar> std::fmt::Debug for FourierPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPlan")
            .field("n", &self.n)
            .field("spectrum", &self.spectrum)
            .field("precision", &T::PRECISION)
            .finish()
    }
}

impl<T: Scalar> FourierPlan<T> {
    pub fn new(n: usize, spectrum: Spectrum) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("spatial size must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        let mut real_planner = RealFftPlanner::new();
        Ok(Self {
            n,
            spectrum,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            r2c: real_planner.plan_fft_forward(n),
            c2r: real_planner.plan_fft_inverse(n),
        })
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::new(n, Spectrum::Full)
    }

    pub fn half(n: usize) -> Result<Self> {
        Self::new(n, Spectrum::Half)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spectrum(&self) -> Spectrum {
        self.spectrum
    }

    /// Stored frequencies along the last axis.
    pub fn freq_cols(&self) -> usize {
        match self.spectrum {
            Spectrum::Full => self.n,
            Spectrum::Half => self.n / 2 + 1,
        }
    }

    pub fn num_freqs(&self) -> usize {
        self.n * self.freq_cols()
    }

    fn check_spatial(&self, dims: &[usize], last: usize) -> Result<usize> {
        let r = dims.len();
        if r < 2 || dims[r - 2] != self.n || dims[r - 1] != last {
            return Err(Error::shape(format!(
                "expected trailing dims {}x{last}, got {dims:?}",
                self.n
            )));
        }
        Ok(dims[..r - 2].iter().product())
    }

    /// Forward transform of a real tensor over its last two dims. In half
    /// mode the last output dim is `⌊n/2⌋+1`.
    pub fn fft2_batch(&self, t: &Tensor<T>) -> Result<TensorC<T>> {
        let batch = self.check_spatial(t.dims(), self.n)?;
        let n = self.n;
        match self.spectrum {
            Spectrum::Full => {
                let mut data: Vec<Complex<T>> = t.data().iter().map(|&v| Complex::from_real(v)).collect();
                self.transform_full(&mut data, batch, &self.forward);
                Ok(Tensor::from_parts(t.dims().to_vec(), data))
            }
            Spectrum::Half => {
                let m = self.freq_cols();
                let mut out = vec![Complex::zero(); batch * n * m];
                let mut row = vec![T::zero(); n];
                let mut scratch = self.r2c.make_scratch_vec();
                for (src, dst) in t.data().chunks_exact(n).zip(out.chunks_exact_mut(m)) {
                    row.copy_from_slice(src);
                    self.r2c
                        .process_with_scratch(&mut row, dst, &mut scratch)
                        .expect("buffer lengths fixed by plan");
                }
                self.columns(&mut out, batch, m, &self.forward);
                let mut dims = t.dims().to_vec();
                *dims.last_mut().unwrap() = m;
                Ok(Tensor::from_parts(dims, out))
            }
        }
    }

    /// Forward transform of a complex tensor (full spectrum only).
    pub fn fft2_batch_complex(&self, t: &TensorC<T>) -> Result<TensorC<T>> {
        let batch = self.check_spatial(t.dims(), self.n)?;
        let mut data = t.data().to_vec();
        self.transform_full(&mut data, batch, &self.forward);
        Ok(Tensor::from_parts(t.dims().to_vec(), data))
    }

    /// Inverse transform with `1/n²` scaling (full spectrum only).
    pub fn ifft2_batch(&self, t: &TensorC<T>) -> Result<TensorC<T>> {
        if self.spectrum == Spectrum::Half {
            return Err(Error::InvalidArgument(
                "complex inverse needs a full-spectrum plan; use ifft2_real".into(),
            ));
        }
        let batch = self.check_spatial(t.dims(), self.n)?;
        let mut data = t.data().to_vec();
        self.transform_full(&mut data, batch, &self.inverse);
        let scale = T::one() / T::lit((self.n * self.n) as f64);
        data.iter_mut().for_each(|v| *v = v.scale_by(scale));
        Ok(Tensor::from_parts(t.dims().to_vec(), data))
    }

    /// Inverse transform to a real tensor. Returns the real part together
    /// with the largest imaginary magnitude that was discarded.
    pub fn ifft2_real(&self, t: &TensorC<T>) -> Result<(Tensor<T>, T)> {
        match self.spectrum {
            Spectrum::Full => {
                let z = self.ifft2_batch(t)?;
                let residue = z.max_abs_imag();
                Ok((z.real_part(), residue))
            }
            Spectrum::Half => {
                let n = self.n;
                let m = self.freq_cols();
                let batch = self.check_spatial(t.dims(), m)?;
                let mut data = t.data().to_vec();
                self.columns(&mut data, batch, m, &self.inverse);
                // Self-conjugate bins must be real; C2R drops their imaginary part.
                let mut residue = T::zero();
                for row in data.chunks_exact_mut(m) {
                    residue = residue.max(Float::abs(row[0].im));
                    row[0].im = T::zero();
                    if n % 2 == 0 {
                        residue = residue.max(Float::abs(row[m - 1].im));
                        row[m - 1].im = T::zero();
                    }
                }
                let mut out = vec![T::zero(); batch * n * n];
                let mut scratch = self.c2r.make_scratch_vec();
                for (src, dst) in data.chunks_exact_mut(m).zip(out.chunks_exact_mut(n)) {
                    self.c2r
                        .process_with_scratch(src, dst, &mut scratch)
                        .expect("buffer lengths fixed by plan");
                }
                let scale = T::one() / T::lit((n * n) as f64);
                out.iter_mut().for_each(|v| *v = *v * scale);
                let mut dims = t.dims().to_vec();
                *dims.last_mut().unwrap() = n;
                Ok((Tensor::from_parts(dims, out), residue * scale))
            }
        }
    }

    /// Rows then columns of each `n × n` slice, in place.
    fn transform_full(&self, data: &mut [Complex<T>], batch: usize, fft: &Arc<dyn Fft<T>>) {
        let n = self.n;
        let mut scratch = vec![Complex::zero(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        for slice in data.chunks_exact_mut(n * n).take(batch) {
            transpose_square(slice, n);
            fft.process_with_scratch(slice, &mut scratch);
            transpose_square(slice, n);
        }
    }

    /// Length-`n` transforms down the columns of each `n × m` slice.
    fn columns(&self, data: &mut [Complex<T>], batch: usize, m: usize, fft: &Arc<dyn Fft<T>>) {
        let n = self.n;
        let mut scratch = vec![Complex::zero(); fft.get_inplace_scratch_len()];
        let mut tmp = vec![Complex::zero(); n * m];
        for slice in data.chunks_exact_mut(n * m).take(batch) {
            for r in 0..n {
                for c in 0..m {
                    tmp[c * n + r] = slice[r * m + c];
                }
            }
            fft.process_with_scratch(&mut tmp, &mut scratch);
            for r in 0..n {
                for c in 0..m {
                    slice[r * m + c] = tmp[c * n + r];
                }
            }
        }
    }
}

fn transpose_square<E: Copy>(a: &mut [E], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            a.swap(r * n + c, c * n + r);
        }
    }
}

/// Per-frequency `c_out × c_in` matrices of a convolution, frequency index
/// `p = i·freq_cols + j` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBlocks<T: Scalar> {
    n: usize,
    c_out: usize,
    c_in: usize,
    spectrum: Spectrum,
    blocks: Vec<Matrix<Complex<T>>>,
}

impl<T: Scalar> FourierBlocks<T> {
    pub fn new(
        n: usize,
        c_out: usize,
        c_in: usize,
        spectrum: Spectrum,
        blocks: Vec<Matrix<Complex<T>>>,
    ) -> Result<Self> {
        let cols = match spectrum {
            Spectrum::Full => n,
            Spectrum::Half => n / 2 + 1,
        };
        if blocks.len() != n * cols {
            return Err(Error::shape(format!(
                "{} blocks for {} frequencies",
                blocks.len(),
                n * cols
            )));
        }
        if let Some(b) = blocks.iter().find(|b| b.rows() != c_out || b.cols() != c_in) {
            return Err(Error::shape(format!(
                "block {}x{} in a {c_out}x{c_in} representation",
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self {
            n,
            c_out,
            c_in,
            spectrum,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn spectrum(&self) -> Spectrum {
        self.spectrum
    }

    pub fn blocks(&self) -> &[Matrix<Complex<T>>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn freq_cols(&self) -> usize {
        match self.spectrum {
            Spectrum::Full => self.n,
            Spectrum::Half => self.n / 2 + 1,
        }
    }

    /// Block at frequency `(i, j)`, indices taken mod `n`; half-spectrum
    /// storage answers for the missing half by conjugate symmetry.
    pub fn block_at(&self, i: usize, j: usize) -> Matrix<Complex<T>> {
        let (i, j) = (i % self.n, j % self.n);
        let m = self.freq_cols();
        if j < m {
            return self.blocks[i * m + j].clone();
        }
        let (ci, cj) = ((self.n - i) % self.n, (self.n - j) % self.n);
        self.blocks[ci * m + cj].conj()
    }

    /// Full-spectrum copy.
    pub fn to_full(&self) -> Self {
        if self.spectrum == Spectrum::Full {
            return self.clone();
        }
        let n = self.n;
        let blocks = (0..n * n).map(|p| self.block_at(p / n, p % n)).collect();
        Self {
            spectrum: Spectrum::Full,
            blocks,
            ..*self
        }
    }

    /// Applies `f` to every block in parallel; `f` fixes the new channel counts.
    pub fn map_blocks(
        &self,
        c_out: usize,
        c_in: usize,
        f: impl Fn(&Matrix<Complex<T>>) -> Matrix<Complex<T>> + Sync + Send,
    ) -> Result<Self> {
        let blocks = self.blocks.par_iter().map(f).collect();
        Self::new(self.n, c_out, c_in, self.spectrum, blocks)
    }

    /// Blocks of the adjoint convolution.
    pub fn adjoint(&self) -> Self {
        Self {
            n: self.n,
            c_out: self.c_in,
            c_in: self.c_out,
            spectrum: self.spectrum,
            blocks: self.blocks.iter().map(Matrix::adjoint).collect(),
        }
    }
}

/// Embeds each `k × k` tap grid in the `n × n` circular grid with the centre
/// tap at offset `(0, 0)`: tap `(a, b)` lands at `((a−s) mod n, (b−s) mod n)`
/// with `s = (k−1)/2`.
pub(crate) fn embed_centered<T: Scalar>(kernel: &ConvKernel<T>) -> Tensor<T> {
    let (co, ci, k, n) = (kernel.c_out(), kernel.c_in(), kernel.k(), kernel.n());
    let s = kernel.shift();
    let taps = kernel.taps().data();
    let mut out = vec![T::zero(); co * ci * n * n];
    for pair in 0..co * ci {
        let src = &taps[pair * k * k..(pair + 1) * k * k];
        let dst = &mut out[pair * n * n..(pair + 1) * n * n];
        for a in 0..k {
            let r = (a + n - s) % n;
            for b in 0..k {
                let c = (b + n - s) % n;
                dst[r * n + c] += src[a * k + b];
            }
        }
    }
    Tensor::from_parts(vec![co, ci, n, n], out)
}

/// Fourier block representation of a kernel on the plan's grid.
pub fn kernel_to_blocks<T: Scalar>(kernel: &ConvKernel<T>, plan: &FourierPlan<T>) -> Result<FourierBlocks<T>> {
    if kernel.n() != plan.n() {
        return Err(Error::shape(format!(
            "kernel targets n={} but plan has n={}",
            kernel.n(),
            plan.n()
        )));
    }
    let (co, ci) = (kernel.c_out(), kernel.c_in());
    let spectrum = plan.fft2_batch(&embed_centered(kernel))?;
    let freqs = plan.num_freqs();
    let data = spectrum.data();
    let blocks = (0..freqs)
        .map(|p| Matrix::from_fn(co, ci, |o, i| data[(o * ci + i) * freqs + p].conj()))
        .collect();
    FourierBlocks::new(plan.n(), co, ci, plan.spectrum(), blocks)
}

/// Spatial kernel of the given odd extent whose response is the blocks'
/// response truncated to the centred `k × k` window.
pub fn blocks_to_kernel<T: Scalar>(blocks: &FourierBlocks<T>, k: usize, plan: &FourierPlan<T>) -> Result<ConvKernel<T>> {
    let n = blocks.n();
    crate::conv::check_kernel_size(k, n)?;
    if plan.n() != n || plan.spectrum() != blocks.spectrum() {
        return Err(Error::shape("plan does not match the block representation"));
    }
    let (co, ci) = (blocks.c_out(), blocks.c_in());
    let freqs = blocks.len();
    let mut spec = vec![Complex::zero(); co * ci * freqs];
    for (p, b) in blocks.blocks().iter().enumerate() {
        for o in 0..co {
            for i in 0..ci {
                spec[(o * ci + i) * freqs + p] = b[(o, i)].conj();
            }
        }
    }
    let spec = Tensor::from_parts(vec![co, ci, n, blocks.freq_cols()], spec);
    let (response, _) = plan.ifft2_real(&spec)?;
    let s = (k - 1) / 2;
    let full = response.data();
    let mut taps = vec![T::zero(); co * ci * k * k];
    for pair in 0..co * ci {
        for a in 0..k {
            let r = (a + n - s) % n;
            for b in 0..k {
                let c = (b + n - s) % n;
                taps[(pair * k + a) * k + b] = full[(pair * n + r) * n + c];
            }
        }
    }
    ConvKernel::new(Tensor::from_parts(vec![co, ci, k, k], taps), n)
}
