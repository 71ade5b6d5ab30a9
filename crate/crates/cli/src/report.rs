use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use xfbq_core::kernel_bench::{bench_inner_product, KernelComparison};
use xfbq_core::{
    generate_synthetic, normalize_rows, quantization_error_report, write_fvecs, BitWidth, Distribution,
    QuantParams,
};

use crate::{read_input, ScaleArgs};

#[derive(Args, Debug)]
pub struct ErrorReportArgs {
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, env = "XFBQ_DOC_BITS", default_value_t = 3)]
    pub doc_bits: u8,

    #[command(flatten)]
    pub scale: ScaleArgs,

    /// Rows to sample, evenly spaced.
    #[arg(long, default_value_t = 1000)]
    pub sample: usize,

    #[arg(long)]
    pub normalize: bool,
}

pub fn run_error_report(args: &ErrorReportArgs) -> anyhow::Result<()> {
    let doc_bits = BitWidth::new(args.doc_bits)?;
    let data = read_input(&args.input)?.data;
    let data = if args.normalize {
        normalize_rows(&data)?
    } else {
        data
    };
    let mut sample = args.sample;
    if sample > data.rows() {
        eprintln!(
            "warning: sample {sample} exceeds {} rows; using all rows",
            data.rows()
        );
        sample = data.rows();
    }
    let scale = args.scale.resolve(&data)?;
    let params = QuantParams::new(doc_bits, doc_bits, scale, data.dim())?;
    let report = quantization_error_report(&data, &params, sample)?;
    println!("doc_bits={doc_bits}");
    println!("scale={scale:.6}");
    print!("{}", report.to_kv());
    Ok(())
}

#[derive(Args, Debug)]
pub struct KernelBenchArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,

    #[arg(long, default_value_t = 128)]
    pub dim: usize,

    #[arg(long, env = "XFBQ_DOC_BITS", default_value_t = 3)]
    pub doc_bits: u8,

    #[arg(long, env = "XFBQ_QUERY_BITS", default_value_t = 4)]
    pub query_bits: u8,

    #[arg(long, default_value_t = 9)]
    pub repetitions: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// CSV destination.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub const KERNEL_SCHEMA: &str = "# schema: xfbq-kernel/1";

pub fn run_kernel_bench(args: &KernelBenchArgs) -> anyhow::Result<()> {
    let cmp = bench_inner_product(
        args.n,
        args.dim,
        BitWidth::new(args.doc_bits)?,
        BitWidth::new(args.query_bits)?,
        args.repetitions,
        args.seed,
    )?;
    for t in [&cmp.quantized, &cmp.portable, &cmp.float] {
        println!(
            "{:<24} {:>12.6} s  {:>14.0} pairs/s",
            t.variant,
            t.wall.as_secs_f64(),
            t.throughput
        );
    }
    println!("speedup={:.3}", cmp.speedup());
    println!("instruction_ratio={:.5}", cmp.instruction_ratio);
    println!("memory_ratio={:.5}", cmp.memory_ratio);
    if let Some(path) = &args.output {
        let mut csv = format!("{KERNEL_SCHEMA}\n{}\n", KernelComparison::CSV_HEADER);
        for row in cmp.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 128)]
    pub dim: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long)]
    pub output: PathBuf,
}

pub fn run_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let ds = generate_synthetic(args.n, args.dim, args.seed, Distribution::GaussianNormalized)?;
    write_fvecs(&ds.data, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    println!("source={}", ds.source);
    Ok(())
}
