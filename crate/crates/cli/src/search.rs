use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use xfbq_core::{k_select, load_index, suggest_extra_distance, Error, FloatMatrix, Index, SearchRequest};

use crate::read_input;

pub const SEARCH_SCHEMA: &str = "# schema: xfbq-search/1";
pub const SEARCH_HEADER: &str = "query_id,rank,doc_id,similarity";

/// Extra-distance choice shared by `search` and `bench`.
#[derive(Args, Debug, Clone)]
pub struct ExtraArgs {
    /// Absolute extra distance added to the k-th smallest distance.
    #[arg(long, env = "XFBQ_EXTRA_DISTANCE", conflicts_with = "extra_fraction")]
    pub extra_distance: Option<u64>,

    /// Extra distance as a fraction of the maximum possible distance.
    #[arg(long, env = "XFBQ_EXTRA_FRACTION", default_value_t = 0.05)]
    pub extra_fraction: f64,
}

impl ExtraArgs {
    pub fn resolve(&self, idx: &Index) -> xfbq_core::Result<u64> {
        match self.extra_distance {
            Some(d) => Ok(d),
            None => suggest_extra_distance(idx, self.extra_fraction),
        }
    }
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,

    /// Query vectors (fvecs).
    #[arg(long)]
    pub queries: PathBuf,

    #[arg(long, env = "XFBQ_K", default_value_t = 10)]
    pub k: usize,

    #[command(flatten)]
    pub extra: ExtraArgs,

    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn open_index(path: &Path) -> anyhow::Result<Index> {
    load_index(path).map_err(|e| anyhow::Error::new(e).context(format!("loading {}", path.display())))
}

pub fn load_queries(path: &PathBuf, idx: &Index) -> anyhow::Result<FloatMatrix> {
    let queries = read_input(path)?.data;
    if queries.is_empty() {
        anyhow::bail!(Error::InvalidInput(format!(
            "{} contains no queries",
            path.display()
        )));
    }
    if queries.dim() != idx.dim() {
        return Err(anyhow::Error::new(Error::DimensionMismatch {
            expected: idx.dim(),
            actual: queries.dim(),
        })
        .context(format!("queries in {}", path.display())));
    }
    Ok(queries)
}

pub fn run(args: &SearchArgs) -> anyhow::Result<()> {
    let idx = open_index(&args.index)?;
    let queries = load_queries(&args.queries, &idx)?;
    let extra = args.extra.resolve(&idx)?;

    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "{SEARCH_SCHEMA}")?;
    writeln!(out, "{SEARCH_HEADER}")?;
    let mut approximate = false;
    for (qi, q) in queries.iter_rows().enumerate() {
        let res =
            k_select(&idx, &SearchRequest::new(q, args.k, extra)?).with_context(|| format!("query {qi}"))?;
        approximate |= res.approximate;
        for (rank, h) in res.hits.iter().enumerate() {
            writeln!(out, "{qi},{rank},{},{:.9}", h.id, h.similarity)?;
        }
    }
    out.flush()?;
    if approximate {
        eprintln!("warning: index has no originals; similarities are quantized estimates");
    }
    Ok(())
}
