//! Orthogonal convolutions through the Cayley transform in the Fourier
//! domain, with the tools needed to check them: dense oracles, exact
//! convolution spectra, Lipschitz-constrained baselines and margin
//! certificates for networks built from 1-Lipschitz layers.
//!
//! Everything numeric is generic over `f32` and `f64`; the aliases below fix
//! the precision for callers that do not need the generality.

pub mod cayley;
pub mod conv;
pub mod error;
pub mod fourier;
pub mod io;
pub mod linalg;
pub mod lipschitz;
pub mod netcert;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use cayley::{cayley_conv, cayley_semi, cayley_square, dense_cayley_oracle, CayleyConv, CayleyConvParams};
pub use conv::{conv_fft, conv_inverse_apply, conv_spatial, conv_transpose, dense_conv_matrix, ConvKernel};
pub use error::{Error, ErrorClass, Result};
pub use fourier::{FourierBlocks, FourierPlan, Spectrum};
pub use lipschitz::{verify_norm_preservation, LayerMethod, NormReport, VerifyConfig};
pub use netcert::{certify, margin, Layer, LipschitzLedger, Network, NetworkDesc};
pub use scalar::{Precision, Scalar};
pub use tensor::{Tensor, TensorC, TensorR};

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type ConvKernelF32 = ConvKernel<f32>;
pub type ConvKernelF64 = ConvKernel<f64>;
pub type CayleyConvF32 = CayleyConv<f32>;
pub type CayleyConvF64 = CayleyConv<f64>;
pub type FourierPlanF32 = FourierPlan<f32>;
pub type FourierPlanF64 = FourierPlan<f64>;
pub type NetworkF32 = Network<f32>;
pub type NetworkF64 = Network<f64>;
