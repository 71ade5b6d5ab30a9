//! Quantized kernel vs naive float dot product at desk scale, plus the
//! closed-form operation and memory counts for both.

use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::bitplane::{quantize_vector, words_per_plane, PackedMatrix};
use crate::dataio::{generate_synthetic, Distribution};
use crate::distance::{batch_distances_range, Popcount};
use crate::error::{Error, Result};
use crate::index::{estimate_scale, DEFAULT_SCALE_PERCENTILE};
use crate::matrix::FloatMatrix;
use crate::quant::BitWidth;

/// Operation counts for one inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    /// Quantized: XOR and POPCNT pairs. Float: multiplications.
    pub primary: u64,
    /// Quantized: shift-and-add steps. Float: additions.
    pub accumulate: u64,
}

impl OpCounts {
    pub fn quantized(x_width: BitWidth, y_width: BitWidth, dim: usize) -> Self {
        let pairs = u64::from(x_width.get()) * u64::from(y_width.get()) * words_per_plane(dim) as u64;
        OpCounts {
            primary: pairs,
            accumulate: pairs.saturating_sub(1),
        }
    }

    pub fn float(dim: usize) -> Self {
        OpCounts {
            primary: dim as u64,
            accumulate: (dim as u64).saturating_sub(1),
        }
    }
}

/// Instructions of the quantized product relative to the float one, counting
/// XOR, POPCNT, shift and add separately against multiply and add.
pub fn instruction_ratio(x_width: BitWidth, y_width: BitWidth, dim: usize) -> f64 {
    let q = OpCounts::quantized(x_width, y_width, dim);
    let f = OpCounts::float(dim);
    (2 * q.primary + 2 * q.accumulate) as f64 / (f.primary + f.accumulate) as f64
}

/// Large-`dim` limit of [`instruction_ratio`]: `B_x · B_y / 32`.
pub fn asymptotic_instruction_ratio(x_width: BitWidth, y_width: BitWidth) -> f64 {
    f64::from(x_width.get()) * f64::from(y_width.get()) / 32.0
}

/// Bytes of both packed operands over bytes of both float operands:
/// `(B_x + B_y) · ceil(N/64) · 8 / (2N · 4)`.
pub fn memory_ratio(x_width: BitWidth, y_width: BitWidth, dim: usize) -> f64 {
    let packed = (u64::from(x_width.get()) + u64::from(y_width.get())) * words_per_plane(dim) as u64 * 8;
    packed as f64 / (2 * dim * 4) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTiming {
    pub variant: String,
    /// Component pairs per pass (`n · dim`).
    pub elements: u64,
    /// Median wall time of one pass.
    pub wall: Duration,
    pub throughput: f64,
}

impl KernelTiming {
    fn new(variant: &str, elements: u64, samples: &mut [Duration]) -> Self {
        samples.sort();
        let wall = samples[samples.len() / 2].max(Duration::from_nanos(1));
        KernelTiming {
            variant: variant.to_string(),
            elements,
            wall,
            throughput: elements as f64 / wall.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelComparison {
    pub n: usize,
    pub dim: usize,
    pub doc_bits: BitWidth,
    pub query_bits: BitWidth,
    pub quantized: KernelTiming,
    pub portable: KernelTiming,
    pub float: KernelTiming,
    pub instruction_ratio: f64,
    pub memory_ratio: f64,
}

impl KernelComparison {
    /// Float wall time over quantized wall time.
    pub fn speedup(&self) -> f64 {
        self.float.wall.as_secs_f64() / self.quantized.wall.as_secs_f64()
    }

    pub const CSV_HEADER: &'static str =
        "variant,n,dim,doc_bits,query_bits,elements,median_seconds,pairs_per_second";

    pub fn csv_rows(&self) -> Vec<String> {
        [&self.quantized, &self.portable, &self.float]
            .into_iter()
            .map(|t| {
                format!(
                    "{},{},{},{},{},{},{:.9},{:.1}",
                    t.variant,
                    self.n,
                    self.dim,
                    self.doc_bits,
                    self.query_bits,
                    t.elements,
                    t.wall.as_secs_f64(),
                    t.throughput
                )
            })
            .collect()
    }
}

/// Straightforward `f32` dot product, summed in index order.
pub fn naive_dot(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Naive float brute-force scores of `query` against every row.
pub fn naive_float_scores(docs: &FloatMatrix, query: &[f32], out: &mut [f32]) {
    for (o, row) in out.iter_mut().zip(docs.iter_rows()) {
        *o = naive_dot(query, row);
    }
}

/// Times one query against `n` synthetic documents with each kernel on the
/// calling thread, reporting the median of `repetitions` passes.
///
/// Fails if the hardware and portable popcount paths disagree on any
/// distance.
pub fn bench_inner_product(
    n: usize,
    dim: usize,
    doc_bits: BitWidth,
    query_bits: BitWidth,
    repetitions: usize,
    seed: u64,
) -> Result<KernelComparison> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    let docs = generate_synthetic(n, dim, seed, Distribution::GaussianNormalized)?.data;
    let query = generate_synthetic(
        1,
        dim,
        seed ^ 0x9e37_79b9_7f4a_7c15,
        Distribution::GaussianNormalized,
    )?
    .data;
    let query = query.row(0);
    let scale = estimate_scale(&docs, DEFAULT_SCALE_PERCENTILE)?;
    let packed = PackedMatrix::quantize(docs.as_slice(), dim, doc_bits, scale)?;
    let q = quantize_vector(query, query_bits, scale)?;

    let mut dist = vec![0u64; n];
    let mut portable = vec![0u64; n];
    let mut scores = vec![0f32; n];
    batch_distances_range(q.as_ref(), &packed, 0, &mut dist, Popcount::Hardware)?;
    batch_distances_range(q.as_ref(), &packed, 0, &mut portable, Popcount::Portable)?;
    if dist != portable {
        return Err(Error::invalid("hardware and portable popcount paths disagree"));
    }

    let mut t_hw = Vec::with_capacity(repetitions);
    let mut t_pt = Vec::with_capacity(repetitions);
    let mut t_fl = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        batch_distances_range(black_box(q.as_ref()), &packed, 0, &mut dist, Popcount::Hardware)?;
        black_box(&dist);
        t_hw.push(t.elapsed());

        let t = Instant::now();
        naive_float_scores(&docs, black_box(query), &mut scores);
        black_box(&scores);
        t_fl.push(t.elapsed());

        let t = Instant::now();
        batch_distances_range(
            black_box(q.as_ref()),
            &packed,
            0,
            &mut portable,
            Popcount::Portable,
        )?;
        black_box(&portable);
        t_pt.push(t.elapsed());
    }

    let elements = (n * dim) as u64;
    Ok(KernelComparison {
        n,
        dim,
        doc_bits,
        query_bits,
        quantized: KernelTiming::new("xfbq-hardware-popcount", elements, &mut t_hw),
        portable: KernelTiming::new("xfbq-portable-popcount", elements, &mut t_pt),
        float: KernelTiming::new("float-naive", elements, &mut t_fl),
        instruction_ratio: instruction_ratio(query_bits, doc_bits, dim),
        memory_ratio: memory_ratio(query_bits, doc_bits, dim),
    })
}
