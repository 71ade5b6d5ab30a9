//! Ground truth and quality measurements.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::bitplane::quantize_vector;
use crate::error::{Error, Result};
use crate::index::QuantParams;
use crate::matrix::{dot_f64, FloatMatrix};
use crate::quant::decode_scalar;
use crate::search::{rank_order, Hit};

/// Exact top-`k` by dot product, similarity descending and id ascending on ties.
pub fn brute_force_topk(vectors: &FloatMatrix, query: &[f32], k: usize) -> Result<Vec<Hit>> {
    if query.len() != vectors.dim() && !vectors.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: vectors.dim(),
            actual: query.len(),
        });
    }
    let mut hits: Vec<Hit> = vectors
        .iter_rows()
        .enumerate()
        .map(|(id, row)| Hit {
            id,
            similarity: dot_f64(query, row),
        })
        .collect();
    hits.sort_by(rank_order);
    hits.truncate(k);
    Ok(hits)
}

/// `|approx[..k] ∩ exact[..k]| / k`.
pub fn precision_at_k(approx: &[usize], exact: &[usize], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let truth: HashSet<usize> = exact.iter().take(k).copied().collect();
    let found: HashSet<usize> = approx.iter().take(k).copied().collect();
    found.intersection(&truth).count() as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionReport {
    pub k: usize,
    pub precision: f64,
    pub per_query: Vec<f64>,
}

impl PrecisionReport {
    pub fn from_lists(approx: &[Vec<usize>], exact: &[Vec<usize>], k: usize) -> Result<Self> {
        if approx.len() != exact.len() {
            return Err(Error::invalid(format!(
                "{} result lists against {} ground-truth lists",
                approx.len(),
                exact.len()
            )));
        }
        if approx.is_empty() {
            return Err(Error::invalid("no queries"));
        }
        let per_query: Vec<f64> = approx
            .iter()
            .zip(exact)
            .map(|(a, e)| precision_at_k(a, e, k))
            .collect();
        let precision = per_query.iter().sum::<f64>() / per_query.len() as f64;
        Ok(PrecisionReport {
            k,
            precision,
            per_query,
        })
    }

    pub fn to_kv(&self) -> String {
        format!(
            "k={}\nqueries={}\nprecision={:.6}\n",
            self.k,
            self.per_query.len(),
            self.precision
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantErrorReport {
    pub rows: usize,
    /// Mean of `|q(sv)| / |sv| − 1` over sampled rows.
    pub mean_length_expansion: f64,
    /// Standard deviation of the per-row relative expansion.
    pub length_spread: f64,
    pub mean_angle_error_deg: f64,
    pub p95_angle_error_deg: f64,
}

impl QuantErrorReport {
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows={}", self.rows);
        let _ = writeln!(s, "mean_length_expansion={:.6}", self.mean_length_expansion);
        let _ = writeln!(s, "length_spread={:.6}", self.length_spread);
        let _ = writeln!(s, "mean_angle_error_deg={:.4}", self.mean_angle_error_deg);
        let _ = writeln!(s, "p95_angle_error_deg={:.4}", self.p95_angle_error_deg);
        s
    }
}

/// Nearest-rank quantile of an ascending-sorted slice.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Angle between `a` and `b` as `2·atan2(|â − b̂|, |â + b̂|)`, which is exact
/// at zero and stays accurate for tiny angles where `acos` loses precision.
fn angle_deg(a: &[f64], a_norm: f64, b: &[f64], b_norm: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / a_norm, y / b_norm);
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    (2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees()
}

/// Compares `scale · v` against its decoded quantization at `params.doc_bits`
/// for `sample` evenly spaced rows.
///
/// Length error is the relative norm change; angle error is the angle between
/// the two vectors in degrees. Zero rows are skipped.
pub fn quantization_error_report(
    vectors: &FloatMatrix,
    params: &QuantParams,
    sample: usize,
) -> Result<QuantErrorReport> {
    params.validate()?;
    if vectors.dim() != params.dim && !vectors.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            actual: vectors.dim(),
        });
    }
    if sample == 0 || vectors.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    if sample > vectors.rows() {
        return Err(Error::invalid(format!(
            "sample {sample} exceeds {} rows",
            vectors.rows()
        )));
    }
    let n = vectors.rows();
    let mut expansions = Vec::with_capacity(sample);
    let mut angles = Vec::with_capacity(sample);
    for s in 0..sample {
        let row = vectors.row(s * n / sample);
        let packed = quantize_vector(row, params.doc_bits, params.scale)?;
        let decoded: Vec<f64> = packed.unpack().into_iter().map(decode_scalar).collect();
        let scaled: Vec<f64> = row.iter().map(|&x| params.scale * f64::from(x)).collect();
        let sn = scaled.iter().map(|x| x * x).sum::<f64>().sqrt();
        if sn == 0.0 {
            continue;
        }
        let qn = decoded.iter().map(|x| x * x).sum::<f64>().sqrt();
        expansions.push(qn / sn - 1.0);
        angles.push(angle_deg(&scaled, sn, &decoded, qn));
    }
    if expansions.is_empty() {
        return Err(Error::invalid("every sampled row is zero"));
    }
    let m = expansions.len() as f64;
    let mean = expansions.iter().sum::<f64>() / m;
    let spread = (expansions.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / m).sqrt();
    angles.sort_by(f64::total_cmp);
    Ok(QuantErrorReport {
        rows: expansions.len(),
        mean_length_expansion: mean,
        length_spread: spread,
        mean_angle_error_deg: angles.iter().sum::<f64>() / m,
        p95_angle_error_deg: quantile_sorted(&angles, 0.95),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::BitWidth;

    #[test]
    fn angle_matches_acos() {
        let a = [1.0, 0.0, 0.0];
        let b = [1.0, 1.0, 0.0];
        assert!((angle_deg(&a, 1.0, &b, 2f64.sqrt()) - 45.0).abs() < 1e-12);
        let c = [-2.0, 0.0, 0.0];
        assert!((angle_deg(&a, 1.0, &c, 2.0) - 180.0).abs() < 1e-12);
        assert_eq!(angle_deg(&b, 2f64.sqrt(), &b, 2f64.sqrt()), 0.0);
    }

    #[test]
    fn precision_examples() {
        let a: Vec<usize> = (0..10).collect();
        assert_eq!(precision_at_k(&a, &a, 10), 1.0);
        let mut b = a.clone();
        b[9] = 99;
        assert_eq!(precision_at_k(&b, &a, 10), 0.9);
        let c: Vec<usize> = (10..20).collect();
        assert_eq!(precision_at_k(&c, &a, 10), 0.0);
        // Symmetric and order-free within the prefix.
        let mut r = b.clone();
        r.reverse();
        assert_eq!(precision_at_k(&a, &r, 10), precision_at_k(&b, &a, 10));
    }

    #[test]
    fn report_means_per_query() {
        let approx = vec![vec![0, 1], vec![2, 9]];
        let exact = vec![vec![0, 1], vec![2, 3]];
        let r = PrecisionReport::from_lists(&approx, &exact, 2).unwrap();
        assert_eq!(r.per_query, vec![1.0, 0.5]);
        assert_eq!(r.precision, 0.75);
        assert!(r.to_kv().contains("precision=0.750000"));
        assert!(PrecisionReport::from_lists(&approx, &exact[..1], 2).is_err());
    }

    #[test]
    fn brute_force_basics() {
        let m = FloatMatrix::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 3, 2).unwrap();
        let hits = brute_force_topk(&m, &[1.0, 0.0], 3).unwrap();
        assert_eq!(
            hits[0],
            Hit {
                id: 0,
                similarity: 1.0
            }
        );
        assert_eq!((hits[1].id, hits[1].similarity), (1, 0.0));
        assert_eq!((hits[2].id, hits[2].similarity), (2, 0.0));
        assert!(brute_force_topk(&m, &[1.0], 1).is_err());
    }

    #[test]
    fn dyadic_input_has_no_error() {
        // Exactly representable at 3 bits with scale 1.
        let m = FloatMatrix::new(vec![0.375, -0.875, 0.125, 0.625], 2, 2).unwrap();
        let p = QuantParams::new(BitWidth::new(3).unwrap(), BitWidth::new(4).unwrap(), 1.0, 2).unwrap();
        let r = quantization_error_report(&m, &p, 2).unwrap();
        assert_eq!(r.mean_length_expansion, 0.0);
        assert_eq!(r.length_spread, 0.0);
        assert_eq!(r.p95_angle_error_deg, 0.0);
    }

    #[test]
    fn error_report_rejects_bad_sample() {
        let m = FloatMatrix::new(vec![0.5, 0.5], 1, 2).unwrap();
        let p = QuantParams::with_defaults(1.0, 2).unwrap();
        assert!(quantization_error_report(&m, &p, 0).is_err());
        assert!(quantization_error_report(&m, &p, 2).is_err());
        let z = FloatMatrix::new(vec![0.0, 0.0], 1, 2).unwrap();
        assert!(quantization_error_report(&z, &p, 1).is_err());
    }
}
