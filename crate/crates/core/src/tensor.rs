//! Dense row-major tensors of rank at most four.

use num_complex::Complex;
use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Field, Scalar};

pub const MAX_RANK: usize = 4;

/// Dense row-major tensor. The last two dims are spatial (height, width)
/// whenever a tensor is interpreted as an image stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E> {
    dims: Vec<usize>,
    data: Vec<E>,
}

pub type TensorR<T> = Tensor<T>;
pub type TensorC<T> = Tensor<Complex<T>>;

impl<E: Field> Tensor<E> {
    /// Builds a tensor, checking rank, length and finiteness.
    pub fn new(dims: Vec<usize>, data: Vec<E>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::BadRank(dims.len() as u8));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::LengthMismatch {
                dims,
                len: data.len(),
            });
        }
        if !data.iter().all(|v| v.finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dims, data })
    }

    /// Unchecked constructor for library-internal results.
    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<E>) -> Self {
        debug_assert!(!dims.is_empty() && dims.len() <= MAX_RANK);
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self::from_parts(dims.to_vec(), vec![E::zero(); len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Same data under new dims with the same element count.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::BadRank(dims.len() as u8));
        }
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(Self::from_parts(dims.to_vec(), self.data))
    }

    pub fn map<F: Field>(&self, f: impl Fn(E) -> F) -> Tensor<F> {
        Tensor::from_parts(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Square root of the sum of squared moduli.
    pub fn frobenius_norm(&self) -> Result<E::Real> {
        if self.data.is_empty() {
            return Err(Error::EmptyTensor);
        }
        Ok(self
            .data
            .iter()
            .fold(E::Real::zero(), |acc, v| acc + v.abs_sq())
            .sqrt())
    }

    /// Frobenius norm accumulated in `f64`, independent of the storage precision.
    pub fn norm_f64(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.abs_sq().as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Real part of the Hermitian inner product `Σ conj(a)·b`.
    pub fn inner(&self, other: &Self) -> Result<E::Real> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(E::Real::zero(), |acc, (&a, &b)| acc + (a.conj() * b).re()))
    }

    pub fn scaled(&self, c: E::Real) -> Self {
        self.map(|v| v.scale_by(c))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<E::Real> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(E::Real::zero(), |m, (&a, &b)| m.max((a - b).modulus())))
    }

    pub fn max_abs(&self) -> E::Real {
        self.data
            .iter()
            .fold(E::Real::zero(), |m, v| m.max(v.modulus()))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(E, E) -> E) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self::from_parts(
            self.dims.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Tensor<T> {
    /// Casts to another precision, rounding as needed.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(|v| U::lit(v.as_f64()))
    }

    pub fn to_complex(&self) -> TensorC<T> {
        self.map(Complex::from_real)
    }
}

impl<T: Scalar> Tensor<Complex<T>> {
    pub fn real_part(&self) -> Tensor<T> {
        self.map(|v| v.re)
    }

    pub fn max_abs_imag(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, v| m.max(num_traits::Float::abs(v.im)))
    }
}
