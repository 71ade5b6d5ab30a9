use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use xfbq_core::{build_index, normalize_rows, save_index, BitWidth, QuantParams};

use crate::{read_input, ScaleArgs};

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Document vectors (fvecs).
    #[arg(long)]
    pub input: PathBuf,

    /// Index file to write.
    #[arg(long)]
    pub output: PathBuf,

    #[arg(long, env = "XFBQ_DOC_BITS", default_value_t = 3)]
    pub doc_bits: u8,

    #[arg(long, env = "XFBQ_QUERY_BITS", default_value_t = 4)]
    pub query_bits: u8,

    #[command(flatten)]
    pub scale: ScaleArgs,

    /// L2-normalize every row before quantizing.
    #[arg(long)]
    pub normalize: bool,

    /// Do not store float originals; searches rank by quantized similarity.
    #[arg(long)]
    pub drop_originals: bool,
}

pub fn run(args: &BuildArgs) -> anyhow::Result<()> {
    let doc_bits = BitWidth::new(args.doc_bits)?;
    let query_bits = BitWidth::new(args.query_bits)?;
    let dataset = read_input(&args.input)?;
    if dataset.rows() == 0 {
        anyhow::bail!(xfbq_core::Error::InvalidInput(format!(
            "{} contains no vectors",
            args.input.display()
        )));
    }
    let start = Instant::now();
    let docs = if args.normalize {
        normalize_rows(&dataset.data)?
    } else {
        dataset.data
    };
    let scale = args.scale.resolve(&docs)?;
    let params = QuantParams::new(doc_bits, query_bits, scale, docs.dim())?;
    let mut index = build_index(&docs, params, false)?;
    let build_seconds = start.elapsed().as_secs_f64();
    let off_unit = index.unnormalized_rows(1e-4);
    if !off_unit.is_empty() {
        eprintln!(
            "warning: {} rows are not unit norm (first: {}); cosine ranking assumes --normalize",
            off_unit.len(),
            off_unit[0]
        );
    }
    if args.drop_originals {
        index = index.without_originals();
    }
    save_index(&index, &args.output).with_context(|| format!("writing {}", args.output.display()))?;

    println!("n={}", index.len());
    println!("dim={}", index.dim());
    println!("doc_bits={doc_bits}");
    println!("query_bits={query_bits}");
    println!("scale={scale:.6}");
    println!("packed_bytes={}", index.packed().size_bytes());
    println!("bytes_written={}", index.serialized_len());
    println!("build_seconds={build_seconds:.6}");
    Ok(())
}
