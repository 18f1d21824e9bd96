//! Scalar abstractions shared by every numerical routine in the crate.
//!
//! [`Scalar`] is the real floating-point type (`f32` or `f64`); [`Field`] is
//! the element type of a matrix or tensor, implemented for the real scalars
//! themselves and for `Complex<T>`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, Neg, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, NumAssign, One, Zero};
use rustfft::FftNum;
use serde::{Deserialize, Serialize};

/// Floating-point width of a tensor or computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

/// Element of a matrix or tensor: a real scalar or a complex number over one.
pub trait Field:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Zero
    + One
    + NumAssign
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    type Real: Scalar;

    fn from_real(r: Self::Real) -> Self;
    fn conj(self) -> Self;
    /// Squared modulus.
    fn abs_sq(self) -> Self::Real;
    fn modulus(self) -> Self::Real;
    fn re(self) -> Self::Real;
    fn im(self) -> Self::Real;
    fn finite(self) -> bool;
    fn scale_by(self, r: Self::Real) -> Self;
}

/// Real floating-point scalar the library is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FftNum
    + Field<Real = Self>
    + Default
    + Display
    + LowerExp
    + Sum
    + 'static
{
    const PRECISION: Precision;

    /// Lossy conversion from an `f64` literal or value.
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty, $prec:expr) => {
        impl Field for $t {
            type Real = $t;

            #[inline]
            fn from_real(r: $t) -> Self {
                r
            }
            #[inline]
            fn conj(self) -> Self {
                self
            }
            #[inline]
            fn abs_sq(self) -> $t {
                self * self
            }
            #[inline]
            fn modulus(self) -> $t {
                <$t>::abs(self)
            }
            #[inline]
            fn re(self) -> $t {
                self
            }
            #[inline]
            fn im(self) -> $t {
                0.0
            }
            #[inline]
            fn finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn scale_by(self, r: $t) -> Self {
                self * r
            }
        }

        impl Scalar for $t {
            const PRECISION: Precision = $prec;

            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, Precision::F32);
impl_real!(f64, Precision::F64);

impl<T: Scalar> Field for Complex<T> {
    type Real = T;

    #[inline]
    fn from_real(r: T) -> Self {
        Complex::new(r, T::zero())
    }
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn abs_sq(self) -> T {
        self.norm_sqr()
    }
    #[inline]
    fn modulus(self) -> T {
        self.norm()
    }
    #[inline]
    fn re(self) -> T {
        self.re
    }
    #[inline]
    fn im(self) -> T {
        self.im
    }
    #[inline]
    fn finite(self) -> bool {
        Float::is_finite(self.re) && Float::is_finite(self.im)
    }
    #[inline]
    fn scale_by(self, r: T) -> Self {
        Complex::new(self.re * r, self.im * r)
    }
}
