//! `orthocheck`: orthogonal convolutions, their baselines and certificates
//! from the command line. Tensors are OCT1 files; reports are JSON on stdout.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orthoconv::lipschitz::LayerMethod;
use orthoconv::{Error, Precision};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "orthocheck", version, about = "Orthogonal convolution toolkit")]
struct Cli {
    /// Worker threads for per-frequency parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a Cayley orthogonal convolution to an input tensor.
    Cayley(CayleyArgs),
    /// Measure norm preservation of a layer on random unit inputs.
    Verify(VerifyArgs),
    /// Print every singular value of a convolution as CSV.
    Spectrum(SpectrumArgs),
    /// Project a kernel with one of the Lipschitz baselines.
    Clip(ClipArgs),
    /// Certify predictions from logits, labels and a Lipschitz constant.
    Certify(CertifyArgs),
    /// Write the dense matrix of a convolution (small sizes only).
    Oracle(OracleArgs),
    /// Time one layer construction plus forward pass.
    Bench(BenchArgs),
    /// Run a network described in JSON and report its Lipschitz ledger.
    Network(NetworkArgs),
}

#[derive(Args, Serialize)]
pub struct CayleyArgs {
    /// Raw weights V, c_out × c_in × k × k.
    #[arg(long)]
    pub weights: PathBuf,
    /// Input, c_in × n × n or b × c_in × n × n.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "f64")]
    pub precision: Precision,
    /// Gain g of the effective weights g·V/‖V‖.
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
}

#[derive(Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub method: LayerMethod,
    #[arg(long)]
    pub cin: usize,
    #[arg(long)]
    pub cout: usize,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "f32")]
    pub precision: Precision,
    #[arg(long, default_value_t = 100)]
    pub ossn_iters: usize,
    #[arg(long, default_value_t = 50)]
    pub svcm_iters: usize,
    /// Inputs per batched forward pass.
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
    /// Transform only the non-redundant half of the spectrum.
    #[arg(long)]
    pub half_spectrum: bool,
}

#[derive(Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Print only the largest values.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMethod {
    Svcm,
    Ossn,
    Rko,
    Crko,
}

#[derive(Args, Serialize)]
pub struct ClipArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "svcm")]
    pub method: ClipMethod,
    /// SVCM projections or OSSN power iterations.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct CertifyArgs {
    /// Logits, examples × classes (or one vector of classes).
    #[arg(long)]
    pub logits: PathBuf,
    /// Integer labels, one per example.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub lipschitz: f64,
    #[arg(long)]
    pub eps: f64,
}

#[derive(Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the dense Cayley transform of the convolution instead.
    #[arg(long)]
    pub cayley: bool,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
}

#[derive(Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub method: LayerMethod,
    #[arg(long)]
    pub cin: usize,
    #[arg(long)]
    pub cout: usize,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "f32")]
    pub precision: Precision,
}

#[derive(Args, Serialize)]
pub struct NetworkArgs {
    /// JSON network description.
    #[arg(long)]
    pub desc: PathBuf,
    /// One example, or a batch stacked along a new leading axis.
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the logits.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Labels to certify against, together with --eps.
    #[arg(long, requires = "eps")]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    pub eps: Option<f64>,
    #[arg(long, default_value = "f64")]
    pub precision: Precision,
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let report = match &cli.command {
        Command::Cayley(a) => commands::cayley(a)?,
        Command::Verify(a) => commands::verify(a)?,
        Command::Spectrum(a) => return commands::spectrum(a),
        Command::Clip(a) => commands::clip(a)?,
        Command::Certify(a) => commands::certify(a)?,
        Command::Oracle(a) => commands::oracle(a)?,
        Command::Bench(a) => commands::bench(a)?,
        Command::Network(a) => commands::network(a)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
