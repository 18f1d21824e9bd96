//! The OCT1 binary tensor format.
//!
//! Layout, little-endian throughout, no padding and no footer:
//!
//! | bytes      | content                                                  |
//! |------------|----------------------------------------------------------|
//! | 4          | magic `4F 43 54 31` (`"OCT1"`)                           |
//! | 1          | dtype: 0 = f32 real, 1 = f64 real, 2 = f32 complex, 3 = f64 complex |
//! | 1          | rank `r` in `1..=4`                                      |
//! | 4·r        | extents as `u32`                                         |
//! | rest       | row-major payload; complex entries interleave `re, im`   |

use std::fs;
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: [u8; 4] = *b"OCT1";

/// A tensor of any dtype the format can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    C32(Tensor<Complex<f32>>),
    C64(Tensor<Complex<f64>>),
}

impl AnyTensor {
    pub fn dtype(&self) -> u8 {
        match self {
            AnyTensor::F32(_) => 0,
            AnyTensor::F64(_) => 1,
            AnyTensor::C32(_) => 2,
            AnyTensor::C64(_) => 3,
        }
    }

    pub fn precision(&self) -> Precision {
        match self {
            AnyTensor::F32(_) | AnyTensor::C32(_) => Precision::F32,
            AnyTensor::F64(_) | AnyTensor::C64(_) => Precision::F64,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
            AnyTensor::C32(t) => t.dims(),
            AnyTensor::C64(t) => t.dims(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AnyTensor::F32(_) => "f32 real",
            AnyTensor::F64(_) => "f64 real",
            AnyTensor::C32(_) => "f32 complex",
            AnyTensor::C64(_) => "f64 complex",
        }
    }

    /// Real tensor converted to precision `T`.
    pub fn into_real<T: Scalar>(self) -> Result<Tensor<T>> {
        match self {
            AnyTensor::F32(t) => Ok(t.cast()),
            AnyTensor::F64(t) => Ok(t.cast()),
            other => Err(Error::WrongKind {
                expected: "real",
                found: other.kind(),
            }),
        }
    }
}

impl From<Tensor<f32>> for AnyTensor {
    fn from(t: Tensor<f32>) -> Self {
        AnyTensor::F32(t)
    }
}
impl From<Tensor<f64>> for AnyTensor {
    fn from(t: Tensor<f64>) -> Self {
        AnyTensor::F64(t)
    }
}
impl From<Tensor<Complex<f32>>> for AnyTensor {
    fn from(t: Tensor<Complex<f32>>) -> Self {
        AnyTensor::C32(t)
    }
}
impl From<Tensor<Complex<f64>>> for AnyTensor {
    fn from(t: Tensor<Complex<f64>>) -> Self {
        AnyTensor::C64(t)
    }
}

/// Encodes a tensor as OCT1 bytes.
pub fn encode(t: &AnyTensor) -> Result<Vec<u8>> {
    let dims = t.dims();
    let mut out = Vec::with_capacity(6 + 4 * dims.len());
    out.extend_from_slice(&MAGIC);
    out.push(t.dtype());
    out.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("extent {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match t {
        AnyTensor::F32(t) => t.data().iter().for_each(|v| out.extend(v.to_le_bytes())),
        AnyTensor::F64(t) => t.data().iter().for_each(|v| out.extend(v.to_le_bytes())),
        AnyTensor::C32(t) => t.data().iter().for_each(|v| {
            out.extend(v.re.to_le_bytes());
            out.extend(v.im.to_le_bytes());
        }),
        AnyTensor::C64(t) => t.data().iter().for_each(|v| {
            out.extend(v.re.to_le_bytes());
            out.extend(v.im.to_le_bytes());
        }),
    }
    Ok(out)
}

/// Decodes OCT1 bytes.
pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 6 {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        return Err(Error::Truncated {
            expected: 6,
            got: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let dtype = bytes[4];
    let (scalar_bytes, parts) = match dtype {
        0 => (4, 1),
        1 => (8, 1),
        2 => (4, 2),
        3 => (8, 2),
        other => return Err(Error::BadDtype(other)),
    };
    let rank = bytes[5];
    if rank == 0 || rank as usize > MAX_RANK {
        return Err(Error::BadRank(rank));
    }
    let header = 6 + 4 * rank as usize;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            got: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidArgument("extent product overflows".into()))?;
    let expected = count
        .checked_mul(scalar_bytes * parts)
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| Error::InvalidArgument("payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes(bytes.len() - expected));
    }
    let payload = &bytes[header..];
    let f32s = || {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
    };
    let f64s = || {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
    };
    Ok(match dtype {
        0 => AnyTensor::F32(Tensor::new(dims, f32s().collect())?),
        1 => AnyTensor::F64(Tensor::new(dims, f64s().collect())?),
        2 => {
            let v: Vec<f32> = f32s().collect();
            let data = v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
            AnyTensor::C32(Tensor::new(dims, data)?)
        }
        _ => {
            let v: Vec<f64> = f64s().collect();
            let data = v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
            AnyTensor::C64(Tensor::new(dims, data)?)
        }
    })
}

pub fn write_tensor(t: &AnyTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode(&fs::read(path)?)
}

/// Reads a real tensor and converts it to precision `T`.
pub fn read_real<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    read_tensor(path)?.into_real()
}

/// Writes a real tensor in its native precision.
pub fn write_real<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let any = match T::PRECISION {
        Precision::F32 => AnyTensor::F32(t.cast()),
        Precision::F64 => AnyTensor::F64(t.cast()),
    };
    write_tensor(&any, path)
}
