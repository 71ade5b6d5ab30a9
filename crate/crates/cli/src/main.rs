mod bench;
mod build;
mod report;
mod search;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "xfbq",
    version,
    about = "Exhaustive top-K cosine search over XOR-friendly binary codes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize an fvecs file into an index.
    Build(build::BuildArgs),
    /// Search an index with fvecs queries, writing CSV hits.
    Search(search::SearchArgs),
    /// Sweep extra distance and K: QPS and precision against ground truth.
    Bench(bench::BenchArgs),
    /// Length and angle error introduced by quantization.
    ErrorReport(report::ErrorReportArgs),
    /// Quantized kernel vs naive float dot product timing.
    KernelBench(report::KernelBenchArgs),
    /// Write a synthetic unit-norm fvecs dataset.
    Generate(report::GenerateArgs),
}

/// Scale choice shared by `build` and `error-report`.
#[derive(Args, Debug, Clone)]
pub struct ScaleArgs {
    /// Fixed scale factor; bypasses estimation.
    #[arg(long, env = "XFBQ_SCALE", conflicts_with = "scale_percentile")]
    pub scale: Option<f64>,

    /// Estimate the scale as 1 / quantile of |component| at this percentile.
    #[arg(long, env = "XFBQ_SCALE_PERCENTILE", default_value_t = 0.98)]
    pub scale_percentile: f64,
}

impl ScaleArgs {
    pub fn resolve(&self, docs: &xfbq_core::FloatMatrix) -> xfbq_core::Result<f64> {
        match self.scale {
            Some(s) => Ok(s),
            None => xfbq_core::estimate_scale(docs, self.scale_percentile),
        }
    }
}

pub fn read_input(path: &PathBuf) -> anyhow::Result<xfbq_core::VectorDataset> {
    xfbq_core::read_fvecs(path)
        .map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))
}

/// Process exit code for each error class.
fn exit_code(err: &anyhow::Error) -> u8 {
    use xfbq_core::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Io(_)) => 3,
        Some(
            Error::Format { .. } | Error::BadMagic(_) | Error::Truncated { .. } | Error::TrailingBytes(_),
        ) => 4,
        Some(Error::UnsupportedVersion(_)) => 5,
        Some(Error::DimensionMismatch { .. }) => 6,
        Some(_) => 7,
        None if err.downcast_ref::<std::io::Error>().is_some() => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => build::run(&a),
        Command::Search(a) => search::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::ErrorReport(a) => report::run_error_report(&a),
        Command::KernelBench(a) => report::run_kernel_bench(&a),
        Command::Generate(a) => report::run_generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
