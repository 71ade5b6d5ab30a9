//! XOR/popcount distance between packed vectors.
//!
//! For packed `x̂` (width `B_x`) and `ŷ` (width `B_y`) the quantized distance
//! is `Σ_{i,j} popcount(x̂_i ⊕ ŷ_j) << (i + j)`, which equals the sum of the
//! per-component ⊗ products. It decodes exactly to the inner product of the
//! decoded vectors:
//!
//! ```text
//! x·y = (N (2^{B_x} − 1)(2^{B_y} − 1) − 2d) / 2^{B_x + B_y}
//! ```
//!
//! Smaller distance means larger similarity, with a constant slope of
//! `−2 / 2^{B_x + B_y}` per unit.

use crate::bitplane::{PackedMatrix, PackedRef, PackedVector};
use crate::error::{Error, Result};
use crate::quant::{scalar_product_upper_bound, BitWidth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct QuantizedDistance(pub u64);

impl QuantizedDistance {
    pub fn get(self) -> u64 {
        self.0
    }
}

/// `N · (2^{B_x} − 1) · (2^{B_y} − 1)`.
pub fn distance_upper_bound(dim: usize, x_width: BitWidth, y_width: BitWidth) -> u64 {
    dim as u64 * scalar_product_upper_bound(x_width, y_width)
}

/// Exact inner product of the decoded vectors for a quantized distance.
pub fn decode_inner_product(
    d: QuantizedDistance,
    dim: usize,
    x_width: BitWidth,
    y_width: BitWidth,
) -> Result<f64> {
    let max = distance_upper_bound(dim, x_width, y_width);
    if d.0 > max {
        return Err(Error::DistanceOutOfRange { value: d.0, max });
    }
    Ok(decode_unchecked(d.0, max, x_width, y_width))
}

#[inline]
pub(crate) fn decode_unchecked(d: u64, max: u64, x_width: BitWidth, y_width: BitWidth) -> f64 {
    let shift = i32::from(x_width.get()) + i32::from(y_width.get());
    (max as i64 - 2 * d as i64) as f64 * 2f64.powi(-shift)
}

/// Population-count implementation used by the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Popcount {
    /// `POPCNT` where the CPU has it, `count_ones` otherwise.
    Hardware,
    /// Nibble lookup table, no CPU feature requirements.
    Portable,
}

impl Popcount {
    pub fn name(self) -> &'static str {
        match self {
            Popcount::Hardware => "hardware",
            Popcount::Portable => "portable",
        }
    }
}

trait Counter {
    fn count(x: u64) -> u64;
}

struct Native;

impl Counter for Native {
    #[inline(always)]
    fn count(x: u64) -> u64 {
        u64::from(x.count_ones())
    }
}

struct Nibble;

const NIBBLE_COUNTS: [u8; 16] = [0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4];

impl Counter for Nibble {
    #[inline(always)]
    fn count(mut x: u64) -> u64 {
        let mut c = 0u64;
        while x != 0 {
            c += u64::from(NIBBLE_COUNTS[(x & 0xf) as usize]);
            x >>= 4;
        }
        c
    }
}

pub fn popcount_portable(x: u64) -> u32 {
    Nibble::count(x) as u32
}

#[inline(always)]
fn pair_distance<C: Counter>(x: &[u64], x_planes: usize, y: &[u64], y_planes: usize, words: usize) -> u64 {
    let mut acc = 0u64;
    for i in 0..x_planes {
        let xi = &x[i * words..(i + 1) * words];
        for j in 0..y_planes {
            let yj = &y[j * words..(j + 1) * words];
            let ones: u64 = xi.iter().zip(yj).map(|(a, b)| C::count(a ^ b)).sum();
            acc += ones << (i + j);
        }
    }
    acc
}

/// [`pair_distance`] with the plane length fixed at compile time so the word
/// loop unrolls. Accumulates per document plane, then shifts once per pair.
#[inline(always)]
fn pair_distance_fixed<C: Counter, const W: usize>(
    x: &[u64],
    x_planes: usize,
    y: &[u64],
    y_planes: usize,
) -> u64 {
    let mut acc = 0u64;
    for j in 0..y_planes {
        let yj: &[u64; W] = y[j * W..(j + 1) * W].try_into().unwrap();
        let mut row = 0u64;
        for i in 0..x_planes {
            let xi: &[u64; W] = x[i * W..(i + 1) * W].try_into().unwrap();
            let mut ones = 0u64;
            for w in 0..W {
                ones += C::count(xi[w] ^ yj[w]);
            }
            row += ones << i;
        }
        acc += row << j;
    }
    acc
}

#[inline(always)]
fn batch_fixed<C: Counter, const W: usize>(
    q: &[u64],
    q_planes: usize,
    rows: &[u64],
    d_planes: usize,
    out: &mut [u64],
) {
    for (slot, row) in out.iter_mut().zip(rows.chunks_exact(W * d_planes)) {
        *slot = pair_distance_fixed::<C, W>(q, q_planes, row, d_planes);
    }
}

#[inline(always)]
fn batch_generic<C: Counter>(query: PackedRef<'_>, docs: &PackedMatrix, first_row: usize, out: &mut [u64]) {
    let words = docs.words();
    let stride = docs.stride();
    let q_planes = usize::from(query.width().get());
    let d_planes = usize::from(docs.width().get());
    let q = query.raw();
    let rows = &docs.raw()[first_row * stride..(first_row + out.len()) * stride];
    match words {
        0 => out.fill(0),
        1 => batch_fixed::<C, 1>(q, q_planes, rows, d_planes, out),
        2 => batch_fixed::<C, 2>(q, q_planes, rows, d_planes, out),
        3 => batch_fixed::<C, 3>(q, q_planes, rows, d_planes, out),
        4 => batch_fixed::<C, 4>(q, q_planes, rows, d_planes, out),
        _ => {
            for (slot, row) in out.iter_mut().zip(rows.chunks_exact(stride)) {
                *slot = pair_distance::<C>(q, q_planes, row, d_planes, words);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn batch_popcnt(query: PackedRef<'_>, docs: &PackedMatrix, first_row: usize, out: &mut [u64]) {
    batch_generic::<Native>(query, docs, first_row, out)
}

fn batch_hardware(query: PackedRef<'_>, docs: &PackedMatrix, first_row: usize, out: &mut [u64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the popcnt feature was detected at runtime.
            unsafe { batch_popcnt(query, docs, first_row, out) };
            return;
        }
    }
    batch_generic::<Native>(query, docs, first_row, out)
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        })
    }
}

/// Quantized distance between two packed vectors of equal dimension.
pub fn packed_distance(x: &PackedVector, y: &PackedVector) -> Result<QuantizedDistance> {
    packed_distance_ref(x.as_ref(), y.as_ref())
}

pub fn packed_distance_ref(x: PackedRef<'_>, y: PackedRef<'_>) -> Result<QuantizedDistance> {
    check_dims(x.dim(), y.dim())?;
    let d = pair_distance::<Native>(
        x.raw(),
        usize::from(x.width().get()),
        y.raw(),
        usize::from(y.width().get()),
        x.words(),
    );
    Ok(QuantizedDistance(d))
}

/// Distances from `query` to rows `first_row .. first_row + out.len()` of
/// `docs`, written to `out` in row order.
pub fn batch_distances_range(
    query: PackedRef<'_>,
    docs: &PackedMatrix,
    first_row: usize,
    out: &mut [u64],
    popcount: Popcount,
) -> Result<()> {
    check_dims(docs.dim(), query.dim())?;
    if first_row + out.len() > docs.len() {
        return Err(Error::invalid(format!(
            "row range {first_row}..{} exceeds {} rows",
            first_row + out.len(),
            docs.len()
        )));
    }
    match popcount {
        Popcount::Hardware => batch_hardware(query, docs, first_row, out),
        Popcount::Portable => batch_generic::<Nibble>(query, docs, first_row, out),
    }
    Ok(())
}

/// Distances from `query` to every row of `docs`.
pub fn batch_distances(query: &PackedVector, docs: &PackedMatrix) -> Result<Vec<u64>> {
    let mut out = vec![0u64; docs.len()];
    batch_distances_range(query.as_ref(), docs, 0, &mut out, Popcount::Hardware)?;
    Ok(out)
}
