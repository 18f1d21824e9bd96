//! 1-Lipschitz network building blocks, a Lipschitz ledger for composed
//! networks, and margin-based robustness certificates.
//!
//! Networks act on one example at a time: convolutional layers take
//! `c × n × n` tensors, `linear_cayley` flattens its input to a vector.

use std::path::{Path, PathBuf};

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::{cayley_semi, CayleyConv, CayleyConvParams};
use crate::conv::{conv_fft, ConvKernel};
use crate::error::{Error, Result};
use crate::fourier::{kernel_to_blocks, FourierBlocks, FourierPlan};
use crate::io::read_real;
use crate::lipschitz::{rko, RkoMethod};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Axis holding channels: the leading axis, or the second one for a rank-4
/// batch.
fn channel_layout(dims: &[usize]) -> (usize, usize, usize) {
    let axis = usize::from(dims.len() == 4);
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

/// Sorts each consecutive channel pair `(0,1), (2,3), …` into `(max, min)`.
pub fn maxmin<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (outer, c, inner) = channel_layout(x.dims());
    if c % 2 != 0 {
        return Err(Error::shape(format!("maxmin needs an even channel count, got {c}")));
    }
    let mut out = x.data().to_vec();
    for o in 0..outer {
        for pair in 0..c / 2 {
            let a0 = (o * c + 2 * pair) * inner;
            let b0 = a0 + inner;
            for i in 0..inner {
                let (a, b) = (out[a0 + i], out[b0 + i]);
                if b > a {
                    out[a0 + i] = b;
                    out[b0 + i] = a;
                }
            }
        }
    }
    Tensor::new(x.dims().to_vec(), out)
}

/// Moves each `2 × 2` spatial block into four channels:
/// `out[4c + 2k1 + k2, i, j] = x[c, 2i + k1, 2j + k2]`. Accepts `c × h × w`
/// or `b × c × h × w`.
pub fn invertible_downsample<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = spatial_dims(x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("downsampling needs even spatial dims, got {h}×{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(x.len());
    let src = x.data();
    for bi in 0..b {
        for ci in 0..c {
            for k1 in 0..2 {
                for k2 in 0..2 {
                    for i in 0..ho {
                        for j in 0..wo {
                            out.push(src[((bi * c + ci) * h + 2 * i + k1) * w + 2 * j + k2]);
                        }
                    }
                }
            }
        }
    }
    let mut dims = vec![4 * c, ho, wo];
    if x.rank() == 4 {
        dims.insert(0, b);
    }
    Tensor::new(dims, out)
}

/// Inverse of [`invertible_downsample`].
pub fn invertible_upsample<T: Scalar>(y: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c4, ho, wo) = spatial_dims(y)?;
    if c4 % 4 != 0 {
        return Err(Error::shape(format!("upsampling needs a channel count divisible by 4, got {c4}")));
    }
    let (c, h, w) = (c4 / 4, 2 * ho, 2 * wo);
    let mut out = vec![T::zero(); y.len()];
    let mut src = y.data().iter();
    for bi in 0..b {
        for ci in 0..c {
            for k1 in 0..2 {
                for k2 in 0..2 {
                    for i in 0..ho {
                        for j in 0..wo {
                            out[((bi * c + ci) * h + 2 * i + k1) * w + 2 * j + k2] = *src.next().unwrap();
                        }
                    }
                }
            }
        }
    }
    let mut dims = vec![c, h, w];
    if y.rank() == 4 {
        dims.insert(0, b);
    }
    Tensor::new(dims, out)
}

fn spatial_dims<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    match *x.dims() {
        [c, h, w] => Ok((1, c, h, w)),
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(Error::shape(format!("expected a rank-3 or rank-4 tensor, got {:?}", x.dims()))),
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// `α f(x) + (1 − α) x` with `α = sigmoid(alpha_raw)`.
pub fn convex_residual<T: Scalar>(f_out: &Tensor<T>, x: &Tensor<T>, alpha_raw: T) -> Result<Tensor<T>> {
    let alpha = sigmoid(alpha_raw);
    f_out.scaled(alpha).add(&x.scaled(T::one() - alpha))
}

/// Lipschitz bound of a convex residual around a branch with bound `l_f`.
pub fn convex_residual_bound<T: Scalar>(l_f: T, alpha_raw: T) -> T {
    let alpha = sigmoid(alpha_raw);
    alpha * l_f + (T::one() - alpha)
}

/// A network layer, prepared for repeated forward passes.
#[derive(Debug, Clone)]
pub enum Layer<T: Scalar> {
    CayleyConv(CayleyConv<T>),
    /// A kernel already orthogonalized with RKO or CRKO.
    RkoConv {
        plan: FourierPlan<T>,
        blocks: FourierBlocks<T>,
    },
    /// Semi-orthogonal weight matrix applied to the flattened input.
    LinearCayley(Matrix<T>),
    MaxMin,
    InvertibleDownsample,
    ConvexResidual {
        inner: Vec<Layer<T>>,
        alpha_raw: T,
    },
    Scale(T),
}

impl<T: Scalar> Layer<T> {
    pub fn cayley_conv(params: &CayleyConvParams<T>) -> Result<Self> {
        let plan = FourierPlan::full(params.n())?;
        Ok(Layer::CayleyConv(CayleyConv::new(params, &plan)?))
    }

    pub fn rko_conv(w: &ConvKernel<T>, method: RkoMethod) -> Result<Self> {
        let plan = FourierPlan::full(w.n())?;
        let blocks = kernel_to_blocks(&rko(w, method)?, &plan)?;
        Ok(Layer::RkoConv { plan, blocks })
    }

    /// Orthogonalizes a `out × in` weight matrix with the Cayley transform.
    pub fn linear_cayley(weight: &Matrix<T>) -> Result<Self> {
        Ok(Layer::LinearCayley(cayley_semi(weight)?))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::CayleyConv(_) => "cayley_conv",
            Layer::RkoConv { .. } => "rko_conv",
            Layer::LinearCayley(_) => "linear_cayley",
            Layer::MaxMin => "maxmin",
            Layer::InvertibleDownsample => "invertible_downsample",
            Layer::ConvexResidual { .. } => "convex_residual",
            Layer::Scale(_) => "scale",
        }
    }

    /// Whether the layer carries weights and so receives a share of a
    /// target Lipschitz constant.
    pub fn is_weighted(&self) -> bool {
        matches!(
            self,
            Layer::CayleyConv(_) | Layer::RkoConv { .. } | Layer::LinearCayley(_) | Layer::ConvexResidual { .. }
        )
    }

    /// Upper bound on the layer's Lipschitz constant.
    pub fn lipschitz_bound(&self) -> T {
        match self {
            Layer::ConvexResidual { inner, alpha_raw } => {
                let l_f = inner.iter().fold(T::one(), |acc, l| acc * l.lipschitz_bound());
                convex_residual_bound(l_f, *alpha_raw)
            }
            Layer::Scale(c) => Float::abs(*c),
            _ => T::one(),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let conv = |c_in: usize, c_out: usize, n: usize| {
            if input != [c_in, n, n] {
                return Err(Error::shape(format!(
                    "{} expects input {:?}, got {input:?}",
                    self.kind(),
                    [c_in, n, n]
                )));
            }
            Ok(vec![c_out, n, n])
        };
        match self {
            Layer::CayleyConv(l) => conv(l.c_in(), l.c_out(), l.plan().n()),
            Layer::RkoConv { plan, blocks } => conv(blocks.c_in(), blocks.c_out(), plan.n()),
            Layer::LinearCayley(q) => {
                let len: usize = input.iter().product();
                if len != q.cols() {
                    return Err(Error::shape(format!("linear layer expects {} features, got {len}", q.cols())));
                }
                Ok(vec![q.rows()])
            }
            Layer::MaxMin => {
                if input.is_empty() || input[0] % 2 != 0 {
                    return Err(Error::shape(format!("maxmin needs an even channel count, got {input:?}")));
                }
                Ok(input.to_vec())
            }
            Layer::InvertibleDownsample => match *input {
                [c, h, w] if h % 2 == 0 && w % 2 == 0 => Ok(vec![4 * c, h / 2, w / 2]),
                _ => Err(Error::shape(format!("downsampling needs c × even × even input, got {input:?}"))),
            },
            Layer::ConvexResidual { inner, .. } => {
                let out = chain_shapes(inner, input)?;
                if out != input {
                    return Err(Error::shape(format!("residual branch maps {input:?} to {out:?}")));
                }
                Ok(out)
            }
            Layer::Scale(_) => Ok(input.to_vec()),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::CayleyConv(l) => l.apply(x),
            Layer::RkoConv { plan, blocks } => conv_fft(plan, blocks, x),
            Layer::LinearCayley(q) => {
                if x.len() != q.cols() {
                    return Err(Error::shape(format!("linear layer expects {} features, got {}", q.cols(), x.len())));
                }
                Tensor::new(vec![q.rows()], q.matvec(x.data()))
            }
            Layer::MaxMin => maxmin(x),
            Layer::InvertibleDownsample => invertible_downsample(x),
            Layer::ConvexResidual { inner, alpha_raw } => {
                let f = inner.iter().try_fold(x.clone(), |h, l| l.forward(&h))?;
                if f.dims() != x.dims() {
                    return Err(Error::shape(format!("residual branch maps {:?} to {:?}", x.dims(), f.dims())));
                }
                convex_residual(&f, x, *alpha_raw)
            }
            Layer::Scale(c) => Ok(x.scaled(*c)),
        }
    }
}

fn chain_shapes<T: Scalar>(layers: &[Layer<T>], input: &[usize]) -> Result<Vec<usize>> {
    layers.iter().try_fold(input.to_vec(), |s, l| l.output_shape(&s))
}

/// Per-layer Lipschitz bounds and their product.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzLedger<T: Scalar> {
    pub per_layer_bounds: Vec<T>,
    pub network_bound: T,
}

/// A sequence of layers with a checked shape chain.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, input_shape: Vec<usize>) -> Result<Self> {
        let output_shape = chain_shapes(&layers, &input_shape)?;
        Ok(Self { layers, input_shape, output_shape })
    }

    /// Follows every weighted layer with `scale(L^{1/m})`, `m` being the
    /// number of weighted layers, so the ledger bound becomes `L` when each
    /// weighted layer is 1-Lipschitz.
    pub fn with_target_lipschitz(self, target: T) -> Result<Self> {
        if !(target > T::zero()) || !target.is_finite() {
            return Err(Error::InvalidArgument(format!("target Lipschitz constant must be positive, got {target:?}")));
        }
        let m = self.layers.iter().filter(|l| l.is_weighted()).count();
        if m == 0 {
            return Err(Error::InvalidArgument("network has no weighted layer to scale".into()));
        }
        let factor = target.powf(T::one() / T::lit(m as f64));
        let mut layers = Vec::with_capacity(self.layers.len() + m);
        for l in self.layers {
            let weighted = l.is_weighted();
            layers.push(l);
            if weighted {
                layers.push(Layer::Scale(factor));
            }
        }
        Network::new(layers, self.input_shape)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.dims() != self.input_shape.as_slice() {
            return Err(Error::shape(format!("network expects input {:?}, got {:?}", self.input_shape, x.dims())));
        }
        self.layers.iter().try_fold(x.clone(), |h, l| l.forward(&h))
    }

    /// Forward passes over independent examples, in parallel.
    pub fn forward_batch(&self, xs: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        xs.par_iter().map(|x| self.forward(x)).collect()
    }

    pub fn ledger(&self) -> LipschitzLedger<T> {
        let per_layer_bounds: Vec<T> = self.layers.iter().map(Layer::lipschitz_bound).collect();
        let network_bound = per_layer_bounds.iter().fold(T::one(), |acc, &b| acc * b);
        LipschitzLedger { per_layer_bounds, network_bound }
    }
}

/// Runs `layers` on `x`; an empty list is the identity.
pub fn apply_network<T: Scalar>(layers: &[Layer<T>], x: &Tensor<T>) -> Result<Tensor<T>> {
    Network::new(layers.to_vec(), x.dims().to_vec())?.forward(x)
}

/// Ledger of `layers`, after distributing `target` over the weighted layers
/// when given.
pub fn ledger<T: Scalar>(layers: &[Layer<T>], input_shape: &[usize], target: Option<T>) -> Result<LipschitzLedger<T>> {
    let net = Network::new(layers.to_vec(), input_shape.to_vec())?;
    Ok(match target {
        Some(l) => net.with_target_lipschitz(l)?.ledger(),
        None => net.ledger(),
    })
}

/// `max(0, y_t − max_{i≠t} y_i)`.
pub fn margin<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    if logits.len() < 2 {
        return Err(Error::shape(format!("margin needs at least two classes, got {}", logits.len())));
    }
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!("label {label} out of range for {} classes", logits.len())));
    }
    let runner_up = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label)
        .fold(T::neg_infinity(), |m, (_, &v)| m.max(v));
    Ok((logits[label] - runner_up).max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate<T: Scalar> {
    pub margin: T,
    pub threshold: T,
    pub certified: bool,
}

/// `√2 · L · ε`.
pub fn certification_threshold<T: Scalar>(lipschitz: T, eps: T) -> Result<T> {
    if !(lipschitz >= T::zero()) || !(eps >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz constant and radius must be non-negative, got {lipschitz:?} and {eps:?}"
        )));
    }
    Ok(T::SQRT_2() * lipschitz * eps)
}

/// Certified when the margin strictly exceeds `√2 · L · ε`.
pub fn certify<T: Scalar>(logits: &[T], label: usize, lipschitz: T, eps: T) -> Result<Certificate<T>> {
    let threshold = certification_threshold(lipschitz, eps)?;
    let margin = margin(logits, label)?;
    Ok(Certificate { margin, threshold, certified: margin > threshold })
}

/// Current version of the JSON network description.
pub const NETWORK_SCHEMA: u32 = 1;

/// JSON description of a network. Weight paths are OCT1 files, relative to
/// the description's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDesc {
    pub schema: u32,
    pub input_shape: Vec<usize>,
    #[serde(default)]
    pub target_lipschitz: Option<f64>,
    pub layers: Vec<LayerDesc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerDesc {
    CayleyConv {
        weights: PathBuf,
        n: usize,
        #[serde(default = "one")]
        gain: f64,
    },
    RkoConv {
        weights: PathBuf,
        n: usize,
        #[serde(default = "bjorck")]
        method: RkoMethod,
    },
    LinearCayley {
        weights: PathBuf,
    },
    Maxmin,
    InvertibleDownsample,
    ConvexResidual {
        alpha_raw: f64,
        inner: Vec<LayerDesc>,
    },
    Scale {
        c: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn bjorck() -> RkoMethod {
    RkoMethod::Bjorck
}

impl NetworkDesc {
    pub fn from_json(text: &str) -> Result<Self> {
        let desc: Self = serde_json::from_str(text).map_err(|e| Error::Network(e.to_string()))?;
        if desc.schema != NETWORK_SCHEMA {
            return Err(Error::Network(format!("unsupported schema {}", desc.schema)));
        }
        Ok(desc)
    }

    /// Loads weights relative to `base` and prepares every layer.
    pub fn build<T: Scalar>(&self, base: &Path) -> Result<Network<T>> {
        let layers = self.layers.iter().map(|l| l.build(base)).collect::<Result<_>>()?;
        let net = Network::new(layers, self.input_shape.clone())?;
        match self.target_lipschitz {
            Some(l) => net.with_target_lipschitz(T::lit(l)),
            None => Ok(net),
        }
    }
}

impl LayerDesc {
    fn build<T: Scalar>(&self, base: &Path) -> Result<Layer<T>> {
        Ok(match self {
            LayerDesc::CayleyConv { weights, n, gain } => {
                Layer::cayley_conv(&CayleyConvParams::new(read_real(base.join(weights))?, T::lit(*gain), *n)?)?
            }
            LayerDesc::RkoConv { weights, n, method } => {
                Layer::rko_conv(&ConvKernel::new(read_real(base.join(weights))?, *n)?, *method)?
            }
            LayerDesc::LinearCayley { weights } => {
                let w: Tensor<T> = read_real(base.join(weights))?;
                let [rows, cols] = *w.dims() else {
                    return Err(Error::shape(format!("linear weights must be rank 2, got {:?}", w.dims())));
                };
                Layer::linear_cayley(&Matrix::from_vec(rows, cols, w.into_data())?)?
            }
            LayerDesc::Maxmin => Layer::MaxMin,
            LayerDesc::InvertibleDownsample => Layer::InvertibleDownsample,
            LayerDesc::ConvexResidual { alpha_raw, inner } => Layer::ConvexResidual {
                inner: inner.iter().map(|l| l.build(base)).collect::<Result<_>>()?,
                alpha_raw: T::lit(*alpha_raw),
            },
            LayerDesc::Scale { c } => Layer::Scale(T::lit(*c)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn t(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn maxmin_examples() {
        let x = t(&[2, 1, 2], vec![1.0, 5.0, 2.0, 3.0]);
        assert_eq!(maxmin(&x).unwrap().data(), &[2.0, 5.0, 1.0, 3.0]);
        let sorted = t(&[2], vec![4.0, -1.0]);
        assert_eq!(maxmin(&sorted).unwrap(), sorted);
        assert!(matches!(maxmin(&t(&[3], vec![1.0; 3])), Err(Error::Shape(_))));
    }

    #[test]
    fn maxmin_batched_uses_second_axis() {
        let x = t(&[2, 2, 1, 1], vec![0.0, 1.0, 3.0, 2.0]);
        assert_eq!(maxmin(&x).unwrap().data(), &[1.0, 0.0, 3.0, 2.0]);
    }

    #[test]
    fn downsample_ordering() {
        let x = t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = invertible_downsample(&x).unwrap();
        assert_eq!(y.dims(), &[4, 1, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let x = t(&[1, 2, 4], (0..8).map(f64::from).collect());
        // Rows 0 and 1: [0 1 2 3] / [4 5 6 7].
        assert_eq!(invertible_downsample(&x).unwrap().data(), &[0.0, 2.0, 1.0, 3.0, 4.0, 6.0, 5.0, 7.0]);
    }

    #[test]
    fn downsample_round_trip_and_errors() {
        let x: Tensor<f64> = SeededRng::new(9).normal_tensor(&[2, 3, 4, 6]);
        let y = invertible_downsample(&x).unwrap();
        assert_eq!(y.dims(), &[2, 12, 2, 3]);
        assert_eq!(invertible_upsample(&y).unwrap(), x);
        assert!(invertible_downsample(&t(&[1, 3, 2], vec![0.0; 6])).is_err());
        assert!(invertible_upsample(&t(&[3, 1, 1], vec![0.0; 3])).is_err());
    }

    #[test]
    fn residual_examples() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let x = t(&[2], vec![1.0, -2.0]);
        let f = t(&[2], vec![3.0, 0.0]);
        assert_eq!(convex_residual(&f, &x, 0.0).unwrap().data(), &[2.0, -1.0]);
        assert_eq!(convex_residual(&x, &x, 1.7).unwrap().max_abs_diff(&x).unwrap(), 0.0);
        assert!(convex_residual(&f, &x, -60.0).unwrap().max_abs_diff(&x).unwrap() < 1e-25);
        assert_eq!(convex_residual_bound(1.0f64, 0.0), 1.0);
        assert_eq!(convex_residual_bound(3.0f64, 0.0), 2.0);
        assert!(convex_residual(&f, &t(&[1], vec![0.0]), 0.0).is_err());
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin(&[3.0, 1.0, 0.5], 0).unwrap(), 2.0);
        assert_eq!(margin(&[1.0, 2.0], 0).unwrap(), 0.0);
        assert_eq!(margin(&[2.0, 2.0], 1).unwrap(), 0.0);
        assert!(margin(&[1.0, 2.0], 2).is_err());
        assert!(margin(&[1.0], 0).is_err());
    }

    #[test]
    fn certify_examples() {
        let c = certify(&[3.0, 1.0, 0.5], 0, 1.0, 36.0 / 255.0).unwrap();
        assert!(c.certified);
        assert!((c.threshold - 0.199_653_679_4).abs() < 1e-10);
        let thr = certification_threshold(1.0, 0.25).unwrap();
        let at = certify(&[thr, 0.0], 0, 1.0, 0.25).unwrap();
        assert_eq!(at.margin, at.threshold);
        assert!(!at.certified);
        assert!(certify(&[1.0, 0.0], 0, -1.0, 0.1).is_err());
        assert!(certify(&[1.0, 0.0], 0, 1.0, -0.1).is_err());
    }

    #[test]
    fn empty_network_is_identity() {
        let x = t(&[2], vec![1.0, 2.0]);
        assert_eq!(apply_network(&[], &x).unwrap(), x);
        assert_eq!(ledger::<f64>(&[], &[2], None).unwrap().network_bound, 1.0);
        assert!(ledger::<f64>(&[], &[2], Some(0.5)).is_err());
    }

    fn weight(seed: u64, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_vec(r, c, SeededRng::new(seed).normal_vec(r * c)).unwrap()
    }

    #[test]
    fn target_lipschitz_is_split_evenly() {
        let layers: Vec<Layer<f64>> = (0..4).map(|s| Layer::linear_cayley(&weight(s, 6, 6)).unwrap()).collect();
        let net = Network::new(layers, vec![6]).unwrap().with_target_lipschitz(0.85).unwrap();
        let l = net.ledger();
        assert_eq!(l.per_layer_bounds.len(), 8);
        assert!((l.per_layer_bounds[1] - 0.85f64.powf(0.25)).abs() < 1e-15);
        assert!((l.network_bound - 0.85).abs() < 1e-12);
        let x: Tensor<f64> = SeededRng::new(11).normal_tensor(&[6]);
        let ratio = net.forward(&x).unwrap().norm_f64() / x.norm_f64();
        assert!((ratio - 0.85).abs() < 1e-12);
    }

    #[test]
    fn shape_chain_is_checked() {
        let conv = Layer::cayley_conv(&CayleyConvParams::new(SeededRng::new(1).normal_tensor(&[4, 2, 3, 3]), 1.0, 4).unwrap()).unwrap();
        let net = Network::new(vec![conv.clone(), Layer::MaxMin, Layer::InvertibleDownsample], vec![2, 4, 4]).unwrap();
        assert_eq!(net.output_shape(), &[16, 2, 2]);
        assert!(Network::new(vec![conv.clone()], vec![3, 4, 4]).is_err());
        let fc = Layer::linear_cayley(&weight(2, 3, 64)).unwrap();
        let net = Network::new(vec![conv, fc], vec![2, 4, 4]).unwrap();
        assert_eq!(net.output_shape(), &[3]);
        let bad = Layer::ConvexResidual { inner: vec![Layer::InvertibleDownsample], alpha_raw: 0.0 };
        assert!(Network::new(vec![bad], vec![1, 2, 2]).is_err());
    }

    #[test]
    fn residual_ledger_uses_inner_bound() {
        let inner = vec![Layer::Scale(3.0), Layer::MaxMin];
        let res = Layer::ConvexResidual { inner, alpha_raw: 0.0 };
        assert_eq!(res.lipschitz_bound(), 2.0);
    }

    #[test]
    fn empirical_expansion_within_bound() {
        let params = CayleyConvParams::new(SeededRng::new(5).normal_tensor(&[2, 2, 3, 3]), 1.0, 4).unwrap();
        let net = Network::new(vec![Layer::cayley_conv(&params).unwrap(), Layer::MaxMin], vec![2, 4, 4]).unwrap();
        let bound = net.ledger().network_bound;
        let mut rng = SeededRng::new(6);
        for _ in 0..20 {
            let x: Tensor<f64> = rng.normal_tensor(&[2, 4, 4]);
            let y: Tensor<f64> = rng.normal_tensor(&[2, 4, 4]);
            let num = net.forward(&x).unwrap().sub(&net.forward(&y).unwrap()).unwrap().norm_f64();
            assert!(num / x.sub(&y).unwrap().norm_f64() <= bound + 1e-12);
        }
    }

    #[test]
    fn description_parses() {
        let text = r#"{"schema":1,"input_shape":[2,4,4],"target_lipschitz":0.85,"layers":[
            {"kind":"cayley_conv","weights":"w.oct","n":4},
            {"kind":"maxmin"},
            {"kind":"convex_residual","alpha_raw":0.0,"inner":[{"kind":"scale","c":0.5}]},
            {"kind":"rko_conv","weights":"r.oct","n":4,"method":"cayley"}]}"#;
        let desc = NetworkDesc::from_json(text).unwrap();
        assert_eq!(desc.layers.len(), 4);
        assert_eq!(desc.layers[0], LayerDesc::CayleyConv { weights: "w.oct".into(), n: 4, gain: 1.0 });
        assert!(NetworkDesc::from_json(&text.replace("\"schema\":1", "\"schema\":2")).is_err());
        assert!(NetworkDesc::from_json(r#"{"schema":1,"input_shape":[1],"layers":[{"kind":"relu"}]}"#).is_err());
    }
}
