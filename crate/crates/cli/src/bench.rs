use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use rayon::ThreadPool;
use xfbq_core::kernel_bench::naive_float_scores;
use xfbq_core::{
    brute_force_topk, k_select, read_ivecs, suggest_extra_distance, Error, FloatMatrix, Index,
    PrecisionReport, SearchRequest, StageTimings,
};

use crate::search::{load_queries, open_index};

pub const BENCH_SCHEMA: &str = "# schema: xfbq-bench/1";
pub const BENCH_HEADER: &str = "extra_distance,k,queries,precision,qps_single,qps_multi,threads,float_qps,\
speedup_vs_float,mean_candidates,quantize_us,distance_us,select_us,refine_us";

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("truth").required(true).args(["ground_truth", "oracle"]))]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,

    #[arg(long)]
    pub queries: PathBuf,

    /// Exact neighbour ids per query (ivecs), at least max(k) per row.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,

    /// Compute ground truth by brute force over the index originals.
    #[arg(long)]
    pub oracle: bool,

    #[arg(long, env = "XFBQ_BENCH_K", value_delimiter = ',', default_value = "1,10,100,1000")]
    pub k: Vec<usize>,

    /// Absolute extra distances to sweep.
    #[arg(long, alias = "extra", value_delimiter = ',', conflicts_with = "extra_fractions")]
    pub extra_distances: Option<Vec<u64>>,

    /// Extra distances to sweep, as fractions of the maximum distance.
    #[arg(
        long,
        env = "XFBQ_BENCH_EXTRA_FRACTIONS",
        value_delimiter = ',',
        default_value = "0,0.02,0.05,0.1"
    )]
    pub extra_fractions: Vec<f64>,

    /// Threads for the multi-thread pass; 0 uses all cores.
    #[arg(long, env = "XFBQ_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// CSV destination.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Point {
    extra: u64,
    k: usize,
    precision: f64,
    qps_single: f64,
    qps_multi: Option<f64>,
    mean_candidates: f64,
    stages: StageTimings,
}

fn qps(queries: usize, wall: Duration) -> f64 {
    queries as f64 / wall.as_secs_f64().max(1e-12)
}

fn us(d: Duration, queries: usize) -> f64 {
    d.as_secs_f64() * 1e6 / queries as f64
}

fn ground_truth(
    args: &BenchArgs,
    idx: &Index,
    queries: &FloatMatrix,
    max_k: usize,
) -> anyhow::Result<Vec<Vec<usize>>> {
    let want = max_k.min(idx.len());
    if let Some(path) = &args.ground_truth {
        let gt = read_ivecs(path)
            .map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))?;
        if gt.rows() != queries.rows() || gt.dim() < want {
            anyhow::bail!(Error::InvalidInput(format!(
                "ground truth is {}x{}, need {} rows with at least {} ids",
                gt.rows(),
                gt.dim(),
                queries.rows(),
                want
            )));
        }
        return gt
            .iter_rows()
            .enumerate()
            .map(|(q, row)| {
                row.iter()
                    .take(want)
                    .map(|&id| {
                        usize::try_from(id)
                            .ok()
                            .filter(|&id| id < idx.len())
                            .ok_or_else(|| {
                                anyhow::Error::new(Error::InvalidInput(format!(
                                    "ground truth row {q} has id {id} outside 0..{}",
                                    idx.len()
                                )))
                            })
                    })
                    .collect()
            })
            .collect();
    }
    let docs = idx.originals().ok_or_else(|| {
        Error::InvalidInput("--oracle needs an index built with originals; pass --ground-truth".into())
    })?;
    queries
        .iter_rows()
        .map(|q| {
            Ok(brute_force_topk(docs, q, want)?
                .into_iter()
                .map(|h| h.id)
                .collect())
        })
        .collect()
}

fn float_baseline(idx: &Index, queries: &FloatMatrix, k: usize) -> Option<f64> {
    let docs = idx.originals()?;
    let mut scores = vec![0f32; docs.rows()];
    let mut order: Vec<usize> = Vec::with_capacity(docs.rows());
    let start = Instant::now();
    for q in queries.iter_rows() {
        naive_float_scores(docs, q, &mut scores);
        order.clear();
        order.extend(0..docs.rows());
        let kk = k.min(order.len());
        order.select_nth_unstable_by(kk - 1, |&a, &b| scores[b].total_cmp(&scores[a]));
        order.truncate(kk);
        order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        std::hint::black_box(&order);
    }
    Some(qps(queries.rows(), start.elapsed()))
}

fn sweep_point(
    idx: &Index,
    queries: &FloatMatrix,
    exact: &[Vec<usize>],
    k: usize,
    extra: u64,
    single: &ThreadPool,
    multi: Option<&ThreadPool>,
) -> anyhow::Result<Point> {
    let requests: Vec<SearchRequest<'_>> = queries
        .iter_rows()
        .map(|q| SearchRequest::new(q, k, extra))
        .collect::<xfbq_core::Result<_>>()?;

    let start = Instant::now();
    let results = single.install(|| {
        requests
            .iter()
            .map(|r| k_select(idx, r))
            .collect::<xfbq_core::Result<Vec<_>>>()
    })?;
    let qps_single = qps(requests.len(), start.elapsed());

    let qps_multi = match multi {
        Some(pool) => {
            let start = Instant::now();
            let multi_results = pool.install(|| {
                requests
                    .par_iter()
                    .map(|r| k_select(idx, r))
                    .collect::<xfbq_core::Result<Vec<_>>>()
            })?;
            let wall = start.elapsed();
            for (a, b) in results.iter().zip(&multi_results) {
                if a.hits != b.hits {
                    anyhow::bail!("multi-thread results differ from single-thread results");
                }
            }
            Some(qps(requests.len(), wall))
        }
        None => None,
    };

    let mut stages = StageTimings::default();
    let mut candidates = 0usize;
    let approx: Vec<Vec<usize>> = results
        .iter()
        .map(|r| {
            stages.accumulate(&r.timings);
            candidates += r.candidate_count;
            r.hits.iter().map(|h| h.id).collect()
        })
        .collect();
    let kk = k.min(idx.len());
    let exact_k: Vec<Vec<usize>> = exact.iter().map(|e| e[..kk].to_vec()).collect();
    let report = PrecisionReport::from_lists(&approx, &exact_k, kk)?;
    Ok(Point {
        extra,
        k,
        precision: report.precision,
        qps_single,
        qps_multi,
        mean_candidates: candidates as f64 / requests.len() as f64,
        stages,
    })
}

pub fn run(args: &BenchArgs) -> anyhow::Result<()> {
    let idx = open_index(&args.index)?;
    let queries = load_queries(&args.queries, &idx)?;
    if idx.is_empty() {
        anyhow::bail!(Error::InvalidInput("index is empty".into()));
    }
    if args.k.is_empty() || args.k.contains(&0) {
        anyhow::bail!(Error::InvalidInput("every k must be at least 1".into()));
    }
    let mut extras: Vec<u64> = match &args.extra_distances {
        Some(d) => d.clone(),
        None => args
            .extra_fractions
            .iter()
            .map(|&f| suggest_extra_distance(&idx, f))
            .collect::<xfbq_core::Result<_>>()?,
    };
    if extras.is_empty() {
        anyhow::bail!(Error::InvalidInput("extra distance sweep is empty".into()));
    }
    extras.sort_unstable();
    extras.dedup();
    let mut ks = args.k.clone();
    ks.sort_unstable();
    ks.dedup();
    let max_k = *ks.last().unwrap();

    let exact = ground_truth(args, &idx, &queries, max_k)?;
    let threads = if args.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        args.threads
    };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let multi = if threads > 1 {
        Some(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
    } else {
        None
    };

    let float_qps: Vec<Option<f64>> = ks.iter().map(|&k| float_baseline(&idx, &queries, k)).collect();
    let mut points = Vec::new();
    for &extra in &extras {
        for &k in &ks {
            points.push(sweep_point(
                &idx,
                &queries,
                &exact,
                k,
                extra,
                &single,
                multi.as_ref(),
            )?);
        }
    }

    let nq = queries.rows();
    let mut csv = format!("{BENCH_SCHEMA}\n{BENCH_HEADER}\n");
    println!(
        "{:>10} {:>5} {:>9} {:>11} {:>11} {:>9} {:>11}",
        "extra", "k", "p@k", "qps(1t)", "qps(mt)", "vs float", "candidates"
    );
    for p in &points {
        let ki = ks.iter().position(|&k| k == p.k).unwrap();
        let fq = float_qps[ki];
        let speedup = fq.map(|f| p.qps_single / f);
        let fmt_opt = |v: Option<f64>, prec: usize| v.map_or(String::new(), |v| format!("{v:.prec$}"));
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{:.3},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            p.extra,
            p.k,
            nq,
            p.precision,
            p.qps_single,
            fmt_opt(p.qps_multi, 3),
            threads,
            fmt_opt(fq, 3),
            fmt_opt(speedup, 4),
            p.mean_candidates,
            us(p.stages.quantize, nq),
            us(p.stages.distance, nq),
            us(p.stages.select, nq),
            us(p.stages.refine, nq),
        );
        println!(
            "{:>10} {:>5} {:>9.4} {:>11.1} {:>11} {:>9} {:>11.1}",
            p.extra,
            p.k,
            p.precision,
            p.qps_single,
            fmt_opt(p.qps_multi, 1),
            speedup.map_or("-".into(), |s| format!("{s:.2}x")),
            p.mean_candidates
        );
    }

    let mut monotone = true;
    for &k in &ks {
        let curve: Vec<&Point> = points.iter().filter(|p| p.k == k).collect();
        for w in curve.windows(2) {
            if w[1].precision < w[0].precision {
                monotone = false;
                eprintln!(
                    "warning: precision@{k} drops from {:.4} to {:.4} as extra grows {} -> {}",
                    w[0].precision, w[1].precision, w[0].extra, w[1].extra
                );
            }
        }
    }
    println!("precision_monotone={monotone}");

    if let Some(path) = &args.output {
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
