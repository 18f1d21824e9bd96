use std::path::Path;
use std::time::Instant;

use orthoconv::cayley::{cayley_conv, dense_cayley_matrix, CayleyConvParams};
use orthoconv::conv::{conv_fft, dense_conv_matrix, ConvKernel};
use orthoconv::fourier::{kernel_to_blocks, FourierPlan};
use orthoconv::io::{read_real, read_tensor, write_real};
use orthoconv::lipschitz::{
    conv_singular_values, ossn_normalize, rko, spectral_deviation, svcm_clip, verify_norm_preservation, LayerMethod,
    RkoMethod, VerifyConfig,
};
use orthoconv::netcert::{certify as certify_one, NetworkDesc};
use orthoconv::rng::{derive_seed, SeededRng};
use orthoconv::{Error, Precision, Result, Scalar, Tensor};

use crate::report::RunReport;
use crate::{BenchArgs, CayleyArgs, CertifyArgs, ClipArgs, ClipMethod, NetworkArgs, OracleArgs, SpectrumArgs, VerifyArgs};

macro_rules! dispatch {
    ($precision:expr, $f:ident($($arg:expr),*)) => {
        match $precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

pub fn cayley(a: &CayleyArgs) -> Result<RunReport> {
    dispatch!(a.precision, cayley_typed(a))
}

fn cayley_typed<T: Scalar>(a: &CayleyArgs) -> Result<RunReport> {
    let params = CayleyConvParams::new(read_real::<T>(&a.weights)?, T::lit(a.gain), a.n)?;
    let x = read_real::<T>(&a.input)?;
    let start = Instant::now();
    let plan = FourierPlan::full(a.n)?;
    let y = cayley_conv(&plan, &params, &x)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_real(&y, &a.out)?;
    let mut report = RunReport::new("cayley", a);
    report
        .metric("norm_ratio", y.norm_f64() / x.norm_f64())
        .timing("apply", elapsed);
    Ok(report)
}

pub fn verify(a: &VerifyArgs) -> Result<RunReport> {
    let cfg = VerifyConfig {
        trials: a.trials,
        seed: a.seed,
        ossn_iters: a.ossn_iters,
        svcm_iters: a.svcm_iters,
        batch: a.batch,
        half_spectrum: a.half_spectrum,
        ..VerifyConfig::new(a.method, a.cin, a.cout, a.n, a.k)
    };
    let start = Instant::now();
    let out = dispatch!(a.precision, verify_norm_preservation(&cfg))?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut report = RunReport::new("verify", a);
    report.seed = Some(a.seed);
    report
        .metric("min_ratio", out.min_ratio)
        .metric("max_ratio", out.max_ratio)
        .metric("mean_ratio", out.mean_ratio)
        .metric("max_imag_residue", out.max_imag_residue)
        .timing("total", elapsed)
        .series("histogram", &out.histogram);
    if let Some(&last) = out.deviations.last() {
        report.metric("final_deviation", last).series("deviations", &out.deviations);
    }
    Ok(report)
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let w = ConvKernel::new(read_real::<f64>(&a.weights)?, a.n)?;
    let r = conv_singular_values(&w)?;
    let count = a.top.unwrap_or(r.singular_values.len()).min(r.singular_values.len());
    let mut out = String::new();
    out.push_str(&format!("# sigma_max={:e}\n", r.sigma_max));
    out.push_str(&format!("# sigma_min={:e}\n", r.sigma_min));
    out.push_str(&format!("# count={}\n", r.singular_values.len()));
    out.push_str("rank,sigma\n");
    for (i, s) in r.singular_values[..count].iter().enumerate() {
        out.push_str(&format!("{i},{s:e}\n"));
    }
    print!("{out}");
    Ok(())
}

pub fn clip(a: &ClipArgs) -> Result<RunReport> {
    let w = ConvKernel::new(read_real::<f64>(&a.weights)?, a.n)?;
    let mut report = RunReport::new("clip", a);
    let start = Instant::now();
    let kernel = match a.method {
        ClipMethod::Svcm => {
            let out = svcm_clip(&w, a.iters)?;
            report.series("deviations", &out.deviations);
            out.kernel
        }
        ClipMethod::Ossn => {
            report.seed = Some(a.seed);
            ossn_normalize(&w, a.iters, a.seed)?
        }
        ClipMethod::Rko => rko(&w, RkoMethod::Bjorck)?,
        ClipMethod::Crko => rko(&w, RkoMethod::Cayley)?,
    };
    report.timing("project", start.elapsed().as_secs_f64());
    let spectrum = conv_singular_values(&kernel)?;
    report
        .metric("sigma_max", spectrum.sigma_max)
        .metric("sigma_min", spectrum.sigma_min)
        .metric("deviation", spectral_deviation(&kernel)?);
    write_real(kernel.taps(), &a.out)?;
    Ok(report)
}

fn labels_from(t: &Tensor<f64>) -> Result<Vec<usize>> {
    t.data()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidArgument(format!("label {v} is not a non-negative integer")))
            }
        })
        .collect()
}

/// Splits logits into per-example rows.
fn logit_rows(t: &Tensor<f64>) -> Result<Vec<&[f64]>> {
    match *t.dims() {
        [_] => Ok(vec![t.data()]),
        [_, classes] => Ok(t.data().chunks(classes).collect()),
        _ => Err(Error::Shape(format!("logits must be rank 1 or 2, got {:?}", t.dims()))),
    }
}

fn certify_rows(rows: &[&[f64]], labels: &[usize], lipschitz: f64, eps: f64, report: &mut RunReport) -> Result<()> {
    if rows.len() != labels.len() {
        return Err(Error::Shape(format!("{} examples but {} labels", rows.len(), labels.len())));
    }
    let certs = rows
        .iter()
        .zip(labels)
        .map(|(row, &t)| certify_one(row, t, lipschitz, eps))
        .collect::<Result<Vec<_>>>()?;
    let certified = certs.iter().filter(|c| c.certified).count();
    report
        .metric("threshold", orthoconv::netcert::certification_threshold(lipschitz, eps)?)
        .metric("certified_count", certified as f64)
        .metric("certified_fraction", certified as f64 / certs.len() as f64)
        .series("certified", certs.iter().map(|c| c.certified).collect::<Vec<_>>())
        .series("margins", certs.iter().map(|c| c.margin).collect::<Vec<_>>());
    Ok(())
}

pub fn certify(a: &CertifyArgs) -> Result<RunReport> {
    let logits = read_real::<f64>(&a.logits)?;
    let labels = labels_from(&read_real::<f64>(&a.labels)?)?;
    let mut report = RunReport::new("certify", a);
    certify_rows(&logit_rows(&logits)?, &labels, a.lipschitz, a.eps, &mut report)?;
    Ok(report)
}

pub fn oracle(a: &OracleArgs) -> Result<RunReport> {
    let raw = read_real::<f64>(&a.weights)?;
    let start = Instant::now();
    let dense = if a.cayley {
        dense_cayley_matrix(&CayleyConvParams::new(raw, a.gain, a.n)?)?
    } else {
        dense_conv_matrix(&ConvKernel::new(raw, a.n)?)?.matrix
    };
    let elapsed = start.elapsed().as_secs_f64();
    let (rows, cols) = (dense.rows(), dense.cols());
    write_real(&Tensor::new(vec![rows, cols], dense.into_data())?, &a.out)?;
    let mut report = RunReport::new("oracle", a);
    report
        .metric("rows", rows as f64)
        .metric("cols", cols as f64)
        .timing("build", elapsed);
    Ok(report)
}

pub fn bench(a: &BenchArgs) -> Result<RunReport> {
    if a.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let times = dispatch!(a.precision, bench_typed(a))?;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut report = RunReport::new("bench", a);
    report.seed = Some(a.seed);
    report
        .timing("median", median)
        .timing("min", sorted[0])
        .timing("max", sorted[sorted.len() - 1])
        .series("times", &times);
    Ok(report)
}

/// Seconds per rep for building the layer from raw weights and applying it
/// to one input, after one untimed warm-up call.
fn bench_typed<T: Scalar>(a: &BenchArgs) -> Result<Vec<f64>> {
    let raw: Tensor<T> = SeededRng::new(a.seed).normal_tensor(&[a.cout, a.cin, a.k, a.k]);
    let x: Tensor<T> = SeededRng::new(derive_seed(a.seed, 0)).unit_tensor(&[a.cin, a.n, a.n]);
    let plan = FourierPlan::<T>::full(a.n)?;
    let call = || -> Result<Tensor<T>> {
        if a.method == LayerMethod::Cayley {
            return cayley_conv(&plan, &CayleyConvParams::new(raw.clone(), T::one(), a.n)?, &x);
        }
        let w = ConvKernel::new(raw.clone(), a.n)?;
        let kernel = match a.method {
            LayerMethod::Rko => rko(&w, RkoMethod::Bjorck)?,
            LayerMethod::Crko => rko(&w, RkoMethod::Cayley)?,
            LayerMethod::Ossn => ossn_normalize(&w, 100, a.seed)?,
            _ => svcm_clip(&w, 50)?.kernel,
        };
        conv_fft(&plan, &kernel_to_blocks(&kernel, &plan)?, &x)
    };
    call()?;
    (0..a.reps)
        .map(|_| {
            let start = Instant::now();
            call()?;
            Ok(start.elapsed().as_secs_f64())
        })
        .collect()
}

pub fn network(a: &NetworkArgs) -> Result<RunReport> {
    dispatch!(a.precision, network_typed(a))
}

fn network_typed<T: Scalar>(a: &NetworkArgs) -> Result<RunReport> {
    let text = std::fs::read_to_string(&a.desc)?;
    let base = a.desc.parent().unwrap_or(Path::new("."));
    let net = NetworkDesc::from_json(&text)?.build::<T>(base)?;
    let x = read_tensor(&a.input)?.into_real::<T>()?;
    let start = Instant::now();
    let (outputs, batched) = if x.dims() == net.input_shape() {
        (vec![net.forward(&x)?], false)
    } else if x.dims().len() == net.input_shape().len() + 1 && &x.dims()[1..] == net.input_shape() {
        let size = x.len() / x.dims()[0];
        let examples = x
            .data()
            .chunks(size)
            .map(|c| Tensor::new(net.input_shape().to_vec(), c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        (net.forward_batch(&examples)?, true)
    } else {
        return Err(Error::Shape(format!(
            "network expects input {:?} (optionally batched), got {:?}",
            net.input_shape(),
            x.dims()
        )));
    };
    let elapsed = start.elapsed().as_secs_f64();
    let width: usize = net.output_shape().iter().product();
    let flat: Vec<T> = outputs.iter().flat_map(|o| o.data().iter().copied()).collect();
    let logits = if batched {
        let mut dims = vec![outputs.len()];
        dims.extend_from_slice(net.output_shape());
        Tensor::new(dims, flat)?
    } else {
        Tensor::new(net.output_shape().to_vec(), flat)?
    };
    if let Some(out) = &a.out {
        write_real(&logits, out)?;
    }
    let ledger = net.ledger();
    let mut report = RunReport::new("network", a);
    report
        .metric("network_bound", ledger.network_bound.as_f64())
        .metric("layers", net.layers().len() as f64)
        .timing("forward", elapsed)
        .series("per_layer_bounds", ledger.per_layer_bounds.iter().map(|b| b.as_f64()).collect::<Vec<_>>())
        .series("layer_kinds", net.layers().iter().map(|l| l.kind()).collect::<Vec<_>>());
    if let (Some(labels), Some(eps)) = (&a.labels, a.eps) {
        let labels = labels_from(&read_real::<f64>(labels)?)?;
        let logits64: Vec<f64> = logits.data().iter().map(|v| v.as_f64()).collect();
        let rows: Vec<&[f64]> = logits64.chunks(width).collect();
        certify_rows(&rows, &labels, ledger.network_bound.as_f64(), eps, &mut report)?;
    }
    Ok(report)
}
