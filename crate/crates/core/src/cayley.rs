//! Orthogonal convolutions through the Cayley transform.
//!
//! A convolution whose Fourier blocks are skew-Hermitian is skew-symmetric
//! as a real operator, so mapping every block `A_p` through
//! `Q_p = (I − A_p)(I + A_p)⁻¹` yields an orthogonal convolution that is
//! still real in the spatial domain. `I + A_p` is always invertible because
//! the eigenvalues of a skew-Hermitian matrix are purely imaginary.

use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;

use crate::conv::{apply_per_frequency, check_oracle_size, dense_conv_matrix, ConvKernel};
use crate::error::{Error, Result};
use crate::fourier::{kernel_to_blocks, FourierBlocks, FourierPlan};
use crate::linalg::{Lu, Matrix};
use crate::scalar::{Field, Scalar};
use crate::tensor::Tensor;

/// `(I − A)(I + A)⁻¹`, evaluated as `(I + A)⁻¹(I − A)` (the factors commute).
fn cayley_of_generator<F: Field>(a: &Matrix<F>) -> Result<Matrix<F>> {
    let eye = Matrix::identity(a.rows());
    let lu = Lu::new(&eye.add(a))?;
    Ok(lu.solve_matrix(&eye.sub(a)))
}

/// Cayley transform of the skew-Hermitian matrix `A = B − B*`.
pub fn cayley_square<F: Field>(b: &Matrix<F>) -> Result<Matrix<F>> {
    if !b.is_square() {
        return Err(Error::shape(format!(
            "cayley_square needs a square matrix, got {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    cayley_of_generator(&b.sub(&b.adjoint()))
}

/// Semi-orthogonal Cayley transform of a rectangular matrix.
///
/// For `c_out ≥ c_in`, with `U` the top `c_in` rows of `W` and `V` the rest,
/// this is the first `c_in` columns of `cayley([W 0])`:
///
/// `[(I − U + U* − V*V)(I + U − U* + V*V)⁻¹ ; −2V(I + U − U* + V*V)⁻¹]`,
///
/// which needs a single `c_in × c_in` factorization. Wide inputs go through
/// the transpose, giving a matrix with orthonormal rows.
pub fn cayley_semi<F: Field>(w: &Matrix<F>) -> Result<Matrix<F>> {
    if w.cols() > w.rows() {
        return Ok(cayley_semi(&w.transpose())?.transpose());
    }
    let c_in = w.cols();
    let u = w.row_block(0, c_in);
    let skew = u.sub(&u.adjoint());
    if w.rows() == c_in {
        return cayley_of_generator(&skew);
    }
    let v = w.row_block(c_in, w.rows());
    let a = skew.add(&v.adjoint().matmul(&v));
    let eye = Matrix::identity(c_in);
    let lu = Lu::new(&eye.add(&a))?;
    let top = lu.solve_matrix(&eye.sub(&a));
    let bottom = v.matmul(&lu.inverse()).scaled(F::Real::lit(-2.0));
    Ok(Matrix::vstack(&top, &bottom))
}

/// Free parameters of a Cayley convolution: raw weights `V`, gain `g`, and
/// the spatial size. Effective weights are `W = g·V/‖V‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct CayleyConvParams<T: Scalar> {
    raw: ConvKernel<T>,
    gain: T,
    signs: Option<Vec<T>>,
}

impl<T: Scalar> CayleyConvParams<T> {
    pub fn new(raw: Tensor<T>, gain: T, n: usize) -> Result<Self> {
        Ok(Self {
            raw: ConvKernel::new(raw, n)?,
            gain,
            signs: None,
        })
    }

    /// Fixed `±1` factor per output channel applied after the transform.
    pub fn with_signs(mut self, signs: Vec<T>) -> Result<Self> {
        if signs.len() != self.c_out() {
            return Err(Error::shape(format!(
                "{} signs for {} output channels",
                signs.len(),
                self.c_out()
            )));
        }
        if signs.iter().any(|&s| s != T::one() && s != -T::one()) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        self.signs = Some(signs);
        Ok(self)
    }

    pub fn raw(&self) -> &ConvKernel<T> {
        &self.raw
    }

    pub fn gain(&self) -> T {
        self.gain
    }

    pub fn signs(&self) -> Option<&[T]> {
        self.signs.as_deref()
    }

    pub fn n(&self) -> usize {
        self.raw.n()
    }

    pub fn k(&self) -> usize {
        self.raw.k()
    }

    pub fn c_in(&self) -> usize {
        self.raw.c_in()
    }

    pub fn c_out(&self) -> usize {
        self.raw.c_out()
    }

    /// `W = g·V/‖V‖_F`.
    pub fn effective_kernel(&self) -> Result<ConvKernel<T>> {
        let norm = self.raw.taps().frobenius_norm()?;
        if norm == T::zero() {
            return Err(Error::DegenerateNorm);
        }
        Ok(self.raw.scaled(self.gain / norm))
    }
}

#[derive(Debug, Clone)]
enum PerFrequency<T: Scalar> {
    /// Square blocks: `A_p` and the factorization of `I + A_p`.
    Square {
        generators: Vec<Matrix<Complex<T>>>,
        factors: Vec<Lu<Complex<T>>>,
    },
    /// Rectangular blocks: the semi-orthogonal `Q_p` itself.
    Explicit(Vec<Matrix<Complex<T>>>),
}

/// A Cayley convolution prepared for repeated application on one grid.
#[derive(Debug, Clone)]
pub struct CayleyConv<T: Scalar> {
    plan: FourierPlan<T>,
    c_in: usize,
    c_out: usize,
    signs: Option<Vec<T>>,
    per_freq: PerFrequency<T>,
}

impl<T: Scalar> CayleyConv<T> {
    pub fn new(params: &CayleyConvParams<T>, plan: &FourierPlan<T>) -> Result<Self> {
        let blocks = kernel_to_blocks(&params.effective_kernel()?, plan)?;
        let per_freq = if params.c_in() == params.c_out() {
            let (generators, factors) = blocks
                .blocks()
                .par_iter()
                .map(|b| {
                    let a = b.sub(&b.adjoint());
                    let lu = Lu::new(&Matrix::identity(a.rows()).add(&a))?;
                    Ok((a, lu))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            PerFrequency::Square { generators, factors }
        } else {
            PerFrequency::Explicit(
                blocks
                    .blocks()
                    .par_iter()
                    .map(cayley_semi)
                    .collect::<Result<_>>()?,
            )
        };
        Ok(Self {
            plan: plan.clone(),
            c_in: params.c_in(),
            c_out: params.c_out(),
            signs: params.signs.clone(),
            per_freq,
        })
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn plan(&self) -> &FourierPlan<T> {
        &self.plan
    }

    fn apply_signs(&self, m: &mut Matrix<Complex<T>>) {
        if let Some(signs) = &self.signs {
            for (r, &s) in signs.iter().enumerate() {
                for c in 0..m.cols() {
                    m[(r, c)] = m[(r, c)].scale_by(s);
                }
            }
        }
    }

    /// Applies the layer to a `c_in × n × n` (or batched) input. Square
    /// layers solve `(I + A)Y = X` and return `Y − AY` per frequency; the
    /// second element is the largest discarded imaginary magnitude.
    pub fn apply_with_residue(&self, x: &Tensor<T>) -> Result<(Tensor<T>, T)> {
        apply_per_frequency(&self.plan, x, self.c_in, self.c_out, |p, xp| {
            let mut z = match &self.per_freq {
                PerFrequency::Square { generators, factors } => {
                    let y = factors[p].solve_matrix(&xp);
                    y.sub(&generators[p].matmul(&y))
                }
                PerFrequency::Explicit(q) => q[p].matmul(&xp),
            };
            self.apply_signs(&mut z);
            Ok(z)
        })
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply_with_residue(x).map(|(y, _)| y)
    }

    /// The per-frequency orthogonal blocks `Q_p`, formed explicitly.
    pub fn orthogonal_blocks(&self) -> Result<FourierBlocks<T>> {
        let blocks = match &self.per_freq {
            PerFrequency::Square { generators, factors } => generators
                .par_iter()
                .zip(factors.par_iter())
                .map(|(a, lu)| {
                    let mut q = lu.solve_matrix(&Matrix::identity(a.rows()).sub(a));
                    self.apply_signs(&mut q);
                    q
                })
                .collect(),
            PerFrequency::Explicit(q) => q
                .iter()
                .map(|q| {
                    let mut q = q.clone();
                    self.apply_signs(&mut q);
                    q
                })
                .collect(),
        };
        FourierBlocks::new(self.plan.n(), self.c_out, self.c_in, self.plan.spectrum(), blocks)
    }

    /// Applies the explicitly formed `Q_p` blocks.
    pub fn apply_explicit(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let q = self.orthogonal_blocks()?;
        crate::conv::conv_fft(&self.plan, &q, x)
    }
}

/// Orthogonal convolution of `x` parameterized by `params`.
pub fn cayley_conv<T: Scalar>(plan: &FourierPlan<T>, params: &CayleyConvParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    CayleyConv::new(params, plan)?.apply(x)
}

/// Dense spatial-domain Cayley matrix of the layer, built in `f64`.
///
/// Pads the dense convolution matrix `C` with zero columns to a square
/// (transposing first when `c_in > c_out`), takes the real Cayley transform
/// of `P − Pᵀ`, and keeps the leading columns.
pub fn dense_cayley_matrix<T: Scalar>(params: &CayleyConvParams<T>) -> Result<Matrix<f64>> {
    let (n, ci, co) = (params.n(), params.c_in(), params.c_out());
    check_oracle_size(n, ci, co)?;
    let w = params.effective_kernel()?.cast::<f64>();
    let dense = dense_conv_matrix(&w)?.matrix;
    let wide = ci > co;
    let base = if wide { dense.transpose() } else { dense };
    let (rows, cols) = (base.rows(), base.cols());
    let padded = DMatrix::<f64>::from_fn(rows, rows, |r, c| if c < cols { base[(r, c)] } else { 0.0 });
    let a = &padded - padded.transpose();
    let eye = DMatrix::<f64>::identity(rows, rows);
    let q = (&eye + &a)
        .lu()
        .solve(&(&eye - &a))
        .ok_or(Error::Singular { index: 0 })?;
    let mut out = Matrix::from_fn(rows, cols, |r, c| q[(r, c)]);
    if wide {
        out = out.transpose();
    }
    if let Some(signs) = params.signs() {
        let nn = n * n;
        for r in 0..out.rows() {
            let s = signs[r / nn].as_f64();
            for c in 0..out.cols() {
                out[(r, c)] *= s;
            }
        }
    }
    Ok(out)
}

/// Reference evaluation of [`cayley_conv`] through the dense Cayley matrix.
pub fn dense_cayley_oracle<T: Scalar>(params: &CayleyConvParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = params.n();
    if x.dims() != [params.c_in(), n, n] {
        return Err(Error::shape(format!(
            "expected input {}x{n}x{n}, got {:?}",
            params.c_in(),
            x.dims()
        )));
    }
    let q = dense_cayley_matrix(params)?;
    let xv: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
    let y = q.matvec(&xv);
    Ok(Tensor::from_parts(
        vec![params.c_out(), n, n],
        y.into_iter().map(T::lit).collect(),
    ))
}

/// `max |(Q*Q − I)|` over all blocks (rows for wide blocks).
pub fn max_unitarity_defect<T: Scalar>(blocks: &FourierBlocks<T>) -> T {
    blocks
        .blocks()
        .par_iter()
        .map(|q| q.orthogonality_defect())
        .reduce(T::zero, Float::max)
}
