//! Small dense matrices over a [`Field`]: products, LU with partial pivoting,
//! and a one-sided Jacobi SVD. These run once per frequency, so matrices are
//! at most `c × c` for the channel count `c`.

use std::ops::{Index, IndexMut};

use num_traits::{Float, One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Field, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Field> Matrix<E> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![E::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = E::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<E>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: E::Real) -> Self {
        self.map(|v| v.scale_by(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == E::zero() {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[E]) -> Vec<E> {
        assert_eq!(self.cols, x.len());
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).fold(E::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Stacks `top` above `bottom`.
    pub fn vstack(top: &Self, bottom: &Self) -> Self {
        assert_eq!(top.cols, bottom.cols);
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        }
    }

    pub fn column(&self, c: usize) -> Vec<E> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn frobenius_norm(&self) -> E::Real {
        self.data
            .iter()
            .fold(E::Real::zero(), |acc, v| acc + v.abs_sq())
            .sqrt()
    }

    /// Largest absolute column sum.
    pub fn norm_one(&self) -> E::Real {
        (0..self.cols)
            .map(|c| (0..self.rows).fold(E::Real::zero(), |acc, r| acc + self[(r, c)].modulus()))
            .fold(E::Real::zero(), Float::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> E::Real {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(E::Real::zero(), |m, (&a, &b)| m.max((a - b).modulus()))
    }

    /// `max |(M*M − I)_{ij}|` for tall or square `M`, `max |(MM* − I)_{ij}|` for wide.
    pub fn orthogonality_defect(&self) -> E::Real {
        let gram = if self.rows >= self.cols {
            self.adjoint().matmul(self)
        } else {
            self.matmul(&self.adjoint())
        };
        gram.max_abs_diff(&Matrix::identity(gram.rows))
    }
}

impl<E> Index<(usize, usize)> for Matrix<E> {
    type Output = E;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &E {
        &self.data[r * self.cols + c]
    }
}

impl<E> IndexMut<(usize, usize)> for Matrix<E> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut E {
        &mut self.data[r * self.cols + c]
    }
}

/// LU factorization `P·M = L·U` with partial (row) pivoting.
#[derive(Debug, Clone)]
pub struct Lu<E> {
    factors: Matrix<E>,
    perm: Vec<usize>,
}

impl<E: Field> Lu<E> {
    /// Factors a square matrix. Fails only on an exactly zero pivot; use
    /// [`Lu::condition_one`] to detect near-singularity.
    pub fn new(m: &Matrix<E>) -> Result<Self> {
        assert!(m.is_square(), "LU of a non-square matrix");
        let n = m.rows;
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot_mag) = (k..n)
                .map(|r| (r, a[(r, k)].abs_sq()))
                .fold((k, E::Real::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_mag == E::Real::zero() {
                return Err(Error::Singular { index: k });
            }
            if pivot_row != k {
                for c in 0..n {
                    a.data.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let inv_pivot = E::one() / a[(k, k)];
            for r in k + 1..n {
                let factor = a[(r, k)] * inv_pivot;
                a[(r, k)] = factor;
                if factor == E::zero() {
                    continue;
                }
                let (upper, lower) = a.data.split_at_mut(r * n);
                let pivot_row = &upper[k * n + k + 1..k * n + n];
                for (dst, &src) in lower[k + 1..n].iter_mut().zip(pivot_row) {
                    *dst -= factor * src;
                }
            }
        }
        Ok(Self { factors: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.factors.rows
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [E]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<E> = self.perm.iter().map(|&p| b[p]).collect();
        let f = &self.factors;
        for i in 0..n {
            let row = &f.data[i * n..i * n + i];
            let s = row.iter().zip(&x[..i]).fold(E::zero(), |acc, (&l, &v)| acc + l * v);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &f.data[i * n + i + 1..(i + 1) * n];
            let s = row.iter().zip(&x[i + 1..]).fold(E::zero(), |acc, (&u, &v)| acc + u * v);
            x[i] = (x[i] - s) / f.data[i * n + i];
        }
        b.copy_from_slice(&x);
    }

    pub fn solve_vec(&self, b: &[E]) -> Vec<E> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<E>) -> Matrix<E> {
        assert_eq!(b.rows, self.dim());
        let mut out = Matrix::zeros(b.rows, b.cols);
        let mut col = vec![E::zero(); b.rows];
        for c in 0..b.cols {
            for r in 0..b.rows {
                col[r] = b[(r, c)];
            }
            self.solve_in_place(&mut col);
            for r in 0..b.rows {
                out[(r, c)] = col[r];
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix<E> {
        self.solve_matrix(&Matrix::identity(self.dim()))
    }

    /// One-norm condition number `‖M‖₁‖M⁻¹‖₁`, with `M` reassembled from the factors.
    pub fn condition_one(&self, original: &Matrix<E>) -> E::Real {
        original.norm_one() * self.inverse().norm_one()
    }
}

/// Thin singular value decomposition `M = U·diag(σ)·V*`, with σ descending.
#[derive(Debug, Clone)]
pub struct Svd<E: Field> {
    pub u: Matrix<E>,
    pub sigma: Vec<E::Real>,
    pub v: Matrix<E>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of a working copy of `M` (or of `M*` when `M`
/// is wide) with unitary plane rotations; the column norms are the singular
/// values.
pub fn svd<E: Field>(m: &Matrix<E>) -> Svd<E> {
    if m.rows < m.cols {
        let Svd { u, sigma, v } = svd(&m.adjoint());
        return Svd { u: v, sigma, v: u };
    }
    let (rows, cols) = (m.rows, m.cols);
    // Work column-major so rotations touch contiguous memory.
    let mut g: Vec<Vec<E>> = (0..cols).map(|c| m.column(c)).collect();
    let mut v: Vec<Vec<E>> = (0..cols)
        .map(|c| (0..cols).map(|r| if r == c { E::one() } else { E::zero() }).collect())
        .collect();
    let eps = E::Real::epsilon();
    let two = E::Real::lit(2.0);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: E::Real = g[p].iter().fold(E::Real::zero(), |a, x| a + x.abs_sq());
                let beta: E::Real = g[q].iter().fold(E::Real::zero(), |a, x| a + x.abs_sq());
                let gamma = g[p]
                    .iter()
                    .zip(&g[q])
                    .fold(E::zero(), |a, (&x, &y)| a + x.conj() * y);
                let gabs = gamma.modulus();
                if gabs == E::Real::zero() || gabs <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Phase that makes the (p, q) inner product real and positive.
                let phase = gamma.scale_by(E::Real::one() / gabs).conj();
                let zeta = (beta - alpha) / (two * gabs);
                let t = if zeta >= E::Real::zero() {
                    E::Real::one() / (zeta + (E::Real::one() + zeta * zeta).sqrt())
                } else {
                    -E::Real::one() / (-zeta + (E::Real::one() + zeta * zeta).sqrt())
                };
                let c = E::Real::one() / (E::Real::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut g, p, q, c, s, phase);
                rotate_pair(&mut v, p, q, c, s, phase);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, E::Real)> = g
        .iter()
        .enumerate()
        .map(|(i, col)| (i, col.iter().fold(E::Real::zero(), |a, x| a + x.abs_sq()).sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));

    let sigma: Vec<E::Real> = order.iter().map(|&(_, s)| s).collect();
    let tiny = sigma.first().copied().unwrap_or_else(E::Real::zero) * eps * E::Real::lit(rows as f64);
    let mut u_cols: Vec<Vec<E>> = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (slot, &(i, s)) in order.iter().enumerate() {
        if s > tiny && s > E::Real::min_positive_value() {
            let inv = E::Real::one() / s;
            u_cols.push(g[i].iter().map(|x| x.scale_by(inv)).collect());
        } else {
            u_cols.push(vec![E::zero(); rows]);
            missing.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &missing);
    let u = Matrix::from_fn(rows, cols, |r, c| u_cols[c][r]);
    let v = Matrix::from_fn(cols, cols, |r, c| v[order[c].0][r]);
    Svd { u, sigma, v }
}

/// `[x_p, x_q] ← [c·x_p − s·φ·x_q, s·x_p + c·φ·x_q]` with unit phase `φ`.
fn rotate_pair<E: Field>(cols: &mut [Vec<E>], p: usize, q: usize, c: E::Real, s: E::Real, phase: E) {
    let (left, right) = cols.split_at_mut(q);
    let (xp, xq) = (&mut left[p], &mut right[0]);
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let bq = *b * phase;
        let ap = *a;
        *a = ap.scale_by(c) - bq.scale_by(s);
        *b = ap.scale_by(s) + bq.scale_by(c);
    }
}

/// Fills the listed zero columns with unit vectors orthogonal to all others
/// (Gram–Schmidt against the standard basis).
fn complete_orthonormal<E: Field>(cols: &mut [Vec<E>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let rows = cols[0].len();
    let mut candidate = 0;
    for &slot in missing {
        while candidate < rows {
            let mut v: Vec<E> = (0..rows)
                .map(|r| if r == candidate { E::one() } else { E::zero() })
                .collect();
            candidate += 1;
            for _ in 0..2 {
                for (j, other) in cols.iter().enumerate() {
                    if j == slot {
                        continue;
                    }
                    let dot = other.iter().zip(&v).fold(E::zero(), |a, (&o, &x)| a + o.conj() * x);
                    for (x, &o) in v.iter_mut().zip(other) {
                        *x -= dot * o;
                    }
                }
            }
            let norm = v.iter().fold(E::Real::zero(), |a, x| a + x.abs_sq()).sqrt();
            if norm > E::Real::lit(0.5) {
                let inv = E::Real::one() / norm;
                cols[slot] = v.iter().map(|x| x.scale_by(inv)).collect();
                break;
            }
        }
    }
}

/// Singular values only, descending.
pub fn singular_values<E: Field>(m: &Matrix<E>) -> Vec<E::Real> {
    svd(m).sigma
}

/// Closest (semi-)unitary matrix `U·V*`: every singular value set to one.
pub fn polar_factor<E: Field>(m: &Matrix<E>) -> Matrix<E> {
    let Svd { u, v, .. } = svd(m);
    u.matmul(&v.adjoint())
}

/// Largest singular value by power iteration on `M*M`, for pre-scaling.
pub fn spectral_norm_estimate<T: Scalar>(m: &Matrix<T>, iters: usize) -> T {
    let n = m.cols();
    if n == 0 || m.rows() == 0 {
        return T::zero();
    }
    let mt = m.transpose();
    // Deterministic non-degenerate start.
    let mut x: Vec<T> = (0..n).map(|i| T::one() + T::lit(i as f64 * 0.1)).collect();
    for _ in 0..iters {
        let z = mt.matvec(&m.matvec(&x));
        let norm = z.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        x = z.iter().map(|&v| v / norm).collect();
    }
    let xnorm = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    m.matvec(&x).iter().fold(T::zero(), |a, &v| a + v * v).sqrt() / xnorm
}
