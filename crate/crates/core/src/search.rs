//! Exhaustive top-K selection over a quantized index.
//!
//! One query runs through five stages:
//!
//! 1. quantize the query at `query_bits` with the index scale;
//! 2. compute the XOR/popcount distance to every document;
//! 3. histogram the distances (one bin per integer value) and find the
//!    smallest distance `t` with at least `K` documents at or below it;
//! 4. gather every document with distance `≤ t + extra_distance`;
//! 5. re-rank the candidates by exact floating-point similarity.
//!
//! With `extra_distance ≥ distance_upper_bound` every document is a
//! candidate and the result equals exact brute-force search.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bitplane::{quantize_vector, PackedVector};
use crate::distance::{batch_distances_range, decode_unchecked, distance_upper_bound, Popcount};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::matrix::dot_f64;

/// Documents per parallel work unit in the distance pass.
const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct SearchRequest<'a> {
    pub query: &'a [f32],
    pub k: usize,
    pub extra_distance: u64,
}

impl<'a> SearchRequest<'a> {
    pub fn new(query: &'a [f32], k: usize, extra_distance: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if let Some(index) = query.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(SearchRequest {
            query,
            k,
            extra_distance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: usize,
    pub similarity: f64,
}

/// Similarity descending, id ascending.
pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub quantize: Duration,
    pub distance: Duration,
    pub select: Duration,
    pub refine: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.quantize + self.distance + self.select + self.refine
    }

    pub fn accumulate(&mut self, other: &StageTimings) {
        self.quantize += other.quantize;
        self.distance += other.distance;
        self.select += other.select;
        self.refine += other.refine;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
    pub candidate_count: usize,
    pub threshold_distance: u64,
    /// Set when the index has no originals and hits are ranked by
    /// quantized similarity.
    pub approximate: bool,
    pub timings: StageTimings,
}

/// Frequency of each integer distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceHistogram {
    bins: Vec<u32>,
}

impl DistanceHistogram {
    /// Bins for distances `0 ..= max_distance`.
    pub fn new(max_distance: u64) -> Self {
        DistanceHistogram {
            bins: vec![0; max_distance as usize + 1],
        }
    }

    pub fn from_distances(distances: &[u64], max_distance: u64) -> Result<Self> {
        let mut h = Self::new(max_distance);
        for &d in distances {
            if d > max_distance {
                return Err(Error::DistanceOutOfRange {
                    value: d,
                    max: max_distance,
                });
            }
            h.bins[d as usize] += 1;
        }
        Ok(h)
    }

    #[inline]
    fn add(&mut self, d: u64) {
        self.bins[d as usize] += 1;
    }

    /// Adds `other` bin by bin. Both must have the same range.
    pub fn merge(&mut self, other: &DistanceHistogram) {
        debug_assert_eq!(self.bins.len(), other.bins.len());
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }

    pub fn bins(&self) -> &[u32] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&c| u64::from(c)).sum()
    }

    /// Smallest `t` with `#{d ≤ t} ≥ min(k, total)`, or `None` when empty.
    pub fn kth_distance(&self, k: usize) -> Option<u64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let need = (k as u64).min(total).max(1);
        let mut seen = 0u64;
        for (d, &c) in self.bins.iter().enumerate() {
            seen += u64::from(c);
            if seen >= need {
                return Some(d as u64);
            }
        }
        unreachable!("cumulative count reaches the total")
    }
}

/// The `min(k, n)`-th smallest distance plus `extra`.
pub fn histogram_kth_distance(distances: &[u64], k: usize, extra: u64) -> Result<u64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let max = *distances
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("no distances to select from"))?;
    let h = DistanceHistogram::from_distances(distances, max)?;
    let kth = h.kth_distance(k).expect("non-empty histogram");
    Ok(kth.saturating_add(extra))
}

/// Ids with distance `≤ threshold`, ascending.
pub fn gather_candidates(distances: &[u64], threshold: u64) -> Vec<usize> {
    if distances.len() <= CHUNK_ROWS {
        return gather_range(distances, 0, threshold);
    }
    distances
        .par_chunks(CHUNK_ROWS)
        .enumerate()
        .map(|(c, chunk)| gather_range(chunk, c * CHUNK_ROWS, threshold))
        .collect::<Vec<_>>()
        .concat()
}

fn gather_range(distances: &[u64], offset: usize, threshold: u64) -> Vec<usize> {
    distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= threshold)
        .map(|(i, _)| offset + i)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub hits: Vec<Hit>,
    pub approximate: bool,
}

fn top_k(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, rank_order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(rank_order);
    hits
}

/// Re-ranks `candidates` by exact similarity `query · original`.
///
/// Without originals in the index, candidates are ranked by quantized
/// similarity (decoded inner product divided by `scale²`) and the result is
/// flagged approximate.
pub fn refine(idx: &Index, query: &[f32], candidates: &[usize], k: usize) -> Result<Refined> {
    check_query(idx, query)?;
    if let Some(&bad) = candidates.iter().find(|&&id| id >= idx.len()) {
        return Err(Error::invalid(format!(
            "candidate {bad} out of range for {} rows",
            idx.len()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    match idx.originals() {
        Some(_) => Ok(refine_exact(idx, query, candidates, k)),
        None => {
            let q = quantize_vector(query, idx.params().query_bits, idx.params().scale)?;
            let qref = q.as_ref();
            let dists: Vec<u64> = candidates
                .iter()
                .map(|&id| {
                    let mut d = [0u64];
                    batch_distances_range(qref, idx.packed(), id, &mut d, Popcount::Hardware)
                        .expect("validated range");
                    d[0]
                })
                .collect();
            Ok(refine_quantized(idx, candidates, &dists, k))
        }
    }
}

fn refine_exact(idx: &Index, query: &[f32], candidates: &[usize], k: usize) -> Refined {
    let originals = idx.originals().expect("caller checked originals");
    let hits: Vec<Hit> = candidates
        .par_iter()
        .with_min_len(1024)
        .map(|&id| Hit {
            id,
            similarity: dot_f64(query, originals.row(id)),
        })
        .collect();
    Refined {
        hits: top_k(hits, k),
        approximate: false,
    }
}

fn refine_quantized(idx: &Index, candidates: &[usize], distances: &[u64], k: usize) -> Refined {
    let p = idx.params();
    let max = distance_upper_bound(p.dim, p.query_bits, p.doc_bits);
    let norm = p.scale * p.scale;
    let hits = candidates
        .iter()
        .zip(distances)
        .map(|(&id, &d)| Hit {
            id,
            similarity: decode_unchecked(d, max, p.query_bits, p.doc_bits) / norm,
        })
        .collect();
    Refined {
        hits: top_k(hits, k),
        approximate: true,
    }
}

fn check_query(idx: &Index, query: &[f32]) -> Result<()> {
    if query.len() != idx.dim() {
        return Err(Error::DimensionMismatch {
            expected: idx.dim(),
            actual: query.len(),
        });
    }
    Ok(())
}

/// `round(fraction · distance_upper_bound(N, B_q, B_d))`.
pub fn suggest_extra_distance(idx: &Index, fraction: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "fraction must be in [0, 1], got {fraction}"
        )));
    }
    let p = idx.params();
    let range = distance_upper_bound(p.dim, p.query_bits, p.doc_bits);
    Ok((fraction * range as f64).round() as u64)
}

/// Quantizes the query and computes its distance to every document, writing
/// into `out` (resized to `n`). Returns the merged histogram.
pub fn query_distances(idx: &Index, query: &PackedVector, out: &mut Vec<u64>) -> Result<DistanceHistogram> {
    let p = idx.params();
    let max = distance_upper_bound(p.dim, query.width(), p.doc_bits);
    out.clear();
    out.resize(idx.len(), 0);
    let docs = idx.packed();
    let qref = query.as_ref();
    let partials: Vec<Result<DistanceHistogram>> = out
        .par_chunks_mut(CHUNK_ROWS)
        .enumerate()
        .map(|(c, slots)| {
            batch_distances_range(qref, docs, c * CHUNK_ROWS, slots, Popcount::Hardware)?;
            let mut h = DistanceHistogram::new(max);
            for &d in slots.iter() {
                h.add(d);
            }
            Ok(h)
        })
        .collect();
    let mut hist = DistanceHistogram::new(max);
    for part in partials {
        hist.merge(&part?);
    }
    Ok(hist)
}

/// Runs the full pipeline for one query. When `k > n` all `n` documents are
/// returned.
pub fn k_select(idx: &Index, req: &SearchRequest<'_>) -> Result<SearchResult> {
    check_query(idx, req.query)?;
    if req.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut timings = StageTimings::default();
    if idx.is_empty() {
        return Ok(SearchResult {
            hits: Vec::new(),
            candidate_count: 0,
            threshold_distance: 0,
            approximate: idx.originals().is_none(),
            timings,
        });
    }
    let p = idx.params();

    let t = Instant::now();
    let q = quantize_vector(req.query, p.query_bits, p.scale)?;
    timings.quantize = t.elapsed();

    let t = Instant::now();
    let mut distances = Vec::new();
    let hist = query_distances(idx, &q, &mut distances)?;
    timings.distance = t.elapsed();

    let t = Instant::now();
    let kth = hist.kth_distance(req.k).expect("non-empty index");
    let threshold = kth.saturating_add(req.extra_distance);
    let candidates = gather_candidates(&distances, threshold);
    timings.select = t.elapsed();

    let t = Instant::now();
    let refined = if idx.originals().is_some() {
        refine_exact(idx, req.query, &candidates, req.k)
    } else {
        let cand_d: Vec<u64> = candidates.iter().map(|&id| distances[id]).collect();
        refine_quantized(idx, &candidates, &cand_d, req.k)
    };
    timings.refine = t.elapsed();

    Ok(SearchResult {
        hits: refined.hits,
        candidate_count: candidates.len(),
        threshold_distance: threshold,
        approximate: refined.approximate,
        timings,
    })
}
