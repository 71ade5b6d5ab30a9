//! Bit-plane layout for quantized vectors.
//!
//! A vector of `N` codes of width `B` is stored as `B` planes; plane `b`
//! holds bit `b` of every code, dimension `k` at word `k / 64`, bit `k % 64`.
//! Plane 0 (the least significant digit) comes first. Bits past `N` in the
//! last word of each plane are always zero, so padded positions XOR to zero
//! against any other vector of the same shape.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quant::{quantize_finite, BitWidth, ScalarCode};

/// Number of 64-bit words needed for one plane of `dim` components.
pub fn words_per_plane(dim: usize) -> usize {
    dim.div_ceil(64)
}

fn last_word_mask(dim: usize) -> u64 {
    match dim % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Borrowed view of one packed vector's planes.
#[derive(Debug, Clone, Copy)]
pub struct PackedRef<'a> {
    pub(crate) planes: &'a [u64],
    pub(crate) dim: usize,
    pub(crate) width: BitWidth,
}

impl<'a> PackedRef<'a> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> BitWidth {
        self.width
    }

    pub fn words(&self) -> usize {
        words_per_plane(self.dim)
    }

    pub fn plane(&self, b: usize) -> &'a [u64] {
        let words = self.words();
        &self.planes[b * words..(b + 1) * words]
    }

    /// All planes back to back, plane 0 first.
    pub fn raw(&self) -> &'a [u64] {
        self.planes
    }

    pub fn to_owned(&self) -> PackedVector {
        PackedVector {
            planes: self.planes.to_vec(),
            dim: self.dim,
            width: self.width,
        }
    }

    pub fn unpack(&self) -> Vec<ScalarCode> {
        let words = self.words();
        (0..self.dim)
            .map(|k| {
                let (word, bit) = (k / 64, k % 64);
                let mut bits = 0u8;
                for b in 0..usize::from(self.width.get()) {
                    bits |= (((self.planes[b * words + word] >> bit) & 1) as u8) << b;
                }
                ScalarCode::from_bits_unchecked(bits, self.width)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedVector {
    planes: Vec<u64>,
    dim: usize,
    width: BitWidth,
}

impl PackedVector {
    /// All-zero-bit vector (every component at the maximum code value).
    pub fn zeros(dim: usize, width: BitWidth) -> Self {
        PackedVector {
            planes: vec![0; usize::from(width.get()) * words_per_plane(dim)],
            dim,
            width,
        }
    }

    /// Validating constructor from raw planes, plane 0 first.
    pub fn from_planes(planes: Vec<u64>, dim: usize, width: BitWidth) -> Result<Self> {
        validate_planes(&planes, dim, width)?;
        Ok(PackedVector { planes, dim, width })
    }

    pub fn as_ref(&self) -> PackedRef<'_> {
        PackedRef {
            planes: &self.planes,
            dim: self.dim,
            width: self.width,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> BitWidth {
        self.width
    }

    pub fn plane(&self, b: usize) -> &[u64] {
        self.as_ref().plane(b)
    }

    pub fn raw(&self) -> &[u64] {
        &self.planes
    }

    pub fn size_bytes(&self) -> usize {
        self.planes.len() * 8
    }

    pub fn unpack(&self) -> Vec<ScalarCode> {
        self.as_ref().unpack()
    }
}

fn validate_planes(planes: &[u64], dim: usize, width: BitWidth) -> Result<()> {
    let words = words_per_plane(dim);
    let expected = usize::from(width.get()) * words;
    if planes.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} plane words for dim {dim} at width {width}, got {}",
            planes.len()
        )));
    }
    if words == 0 {
        return Ok(());
    }
    let mask = last_word_mask(dim);
    for b in 0..usize::from(width.get()) {
        let last = b * words + words - 1;
        if planes[last] & !mask != 0 {
            return Err(Error::PaddingBitSet {
                plane: b,
                word: words - 1,
            });
        }
    }
    Ok(())
}

fn scatter_codes(codes: impl Iterator<Item = u8>, width: BitWidth, words: usize, out: &mut [u64]) {
    for (k, bits) in codes.enumerate() {
        let (word, bit) = (k / 64, k % 64);
        for b in 0..usize::from(width.get()) {
            out[b * words + word] |= (u64::from(bits >> b) & 1) << bit;
        }
    }
}

/// Bit-transposes `codes` into planes. All codes must share one width.
pub fn pack_vector(codes: &[ScalarCode]) -> Result<PackedVector> {
    let first = codes
        .first()
        .ok_or_else(|| Error::invalid("cannot pack an empty code list"))?;
    let width = first.width();
    if let Some(bad) = codes.iter().find(|c| c.width() != width) {
        return Err(Error::MixedWidths {
            expected: width.get(),
            found: bad.width().get(),
        });
    }
    let mut packed = PackedVector::zeros(codes.len(), width);
    let words = words_per_plane(codes.len());
    scatter_codes(codes.iter().map(|c| c.bits()), width, words, &mut packed.planes);
    Ok(packed)
}

pub fn unpack_vector(p: &PackedVector) -> Vec<ScalarCode> {
    p.unpack()
}

fn check_finite(v: &[f32]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "scale must be positive and finite, got {scale}"
        )))
    }
}

fn quantize_into(v: &[f32], width: BitWidth, scale: f64, out: &mut [u64]) {
    let words = words_per_plane(v.len());
    scatter_codes(
        v.iter()
            .map(|&x| quantize_finite(scale * f64::from(x), width).bits()),
        width,
        words,
        out,
    );
}

/// Quantizes `scale · v` component-wise and packs the codes.
pub fn quantize_vector(v: &[f32], width: BitWidth, scale: f64) -> Result<PackedVector> {
    check_scale(scale)?;
    check_finite(v)?;
    let mut packed = PackedVector::zeros(v.len(), width);
    quantize_into(v, width, scale, &mut packed.planes);
    Ok(packed)
}

/// `n` packed vectors sharing dimension and width, stored contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedMatrix {
    data: Vec<u64>,
    n: usize,
    dim: usize,
    width: BitWidth,
}

impl PackedMatrix {
    pub fn empty(dim: usize, width: BitWidth) -> Self {
        PackedMatrix {
            data: Vec::new(),
            n: 0,
            dim,
            width,
        }
    }

    /// Builds from raw row-major plane words, validating length and padding.
    pub fn from_raw(data: Vec<u64>, n: usize, dim: usize, width: BitWidth) -> Result<Self> {
        let stride = usize::from(width.get()) * words_per_plane(dim);
        if data.len() != n * stride {
            return Err(Error::invalid(format!(
                "expected {} words for {n} rows, got {}",
                n * stride,
                data.len()
            )));
        }
        if stride > 0 {
            for row in data.chunks_exact(stride) {
                validate_planes(row, dim, width)?;
            }
        }
        Ok(PackedMatrix { data, n, dim, width })
    }

    pub fn from_vectors(rows: &[PackedVector]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("no rows; use PackedMatrix::empty"));
        };
        let (dim, width) = (first.dim, first.width);
        let mut data = Vec::with_capacity(rows.len() * first.planes.len());
        for r in rows {
            if r.width != width {
                return Err(Error::MixedWidths {
                    expected: width.get(),
                    found: r.width.get(),
                });
            }
            if r.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.dim,
                });
            }
            data.extend_from_slice(&r.planes);
        }
        Ok(PackedMatrix {
            data,
            n: rows.len(),
            dim,
            width,
        })
    }

    /// Quantizes every row of the row-major `vectors` (length `n · dim`).
    pub fn quantize(vectors: &[f32], dim: usize, width: BitWidth, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(Error::invalid("vector data is not a whole number of rows"));
        }
        check_finite(vectors)?;
        let n = vectors.len() / dim;
        let stride = usize::from(width.get()) * words_per_plane(dim);
        let mut data = vec![0u64; n * stride];
        data.par_chunks_mut(stride)
            .zip(vectors.par_chunks(dim))
            .for_each(|(out, v)| quantize_into(v, width, scale, out));
        Ok(PackedMatrix { data, n, dim, width })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> BitWidth {
        self.width
    }

    pub fn words(&self) -> usize {
        words_per_plane(self.dim)
    }

    /// Words per row: `width · ceil(dim / 64)`.
    pub fn stride(&self) -> usize {
        usize::from(self.width.get()) * self.words()
    }

    pub fn row(&self, i: usize) -> PackedRef<'_> {
        let stride = self.stride();
        PackedRef {
            planes: &self.data[i * stride..(i + 1) * stride],
            dim: self.dim,
            width: self.width,
        }
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = PackedRef<'_>> + '_ {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn raw(&self) -> &[u64] {
        &self.data
    }

    /// `n · width · ceil(dim / 64) · 8`.
    pub fn size_bytes(&self) -> usize {
        self.data.len() * 8
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_codes() -> impl Strategy<Value = (u8, Vec<u8>)> {
        (1u8..=8, 1usize..=513).prop_flat_map(|(b, n)| {
            let max = ((1u16 << b) - 1) as u8;
            (Just(b), proptest::collection::vec(0..=max, n))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn pack_unpack_round_trip((b, bits) in arb_codes()) {
            let width = BitWidth::new(b).unwrap();
            let codes: Vec<_> = bits.iter().map(|&x| ScalarCode::new(x, width).unwrap()).collect();
            let p = pack_vector(&codes).unwrap();
            prop_assert_eq!(p.unpack(), codes.clone());
            // Bit-transpose identity and zero padding.
            for (k, c) in codes.iter().enumerate() {
                for plane in 0..usize::from(b) {
                    let bit = (p.plane(plane)[k / 64] >> (k % 64)) & 1;
                    prop_assert_eq!(bit as u8, (c.bits() >> plane) & 1);
                }
            }
            prop_assert!(PackedVector::from_planes(p.raw().to_vec(), p.dim(), width).is_ok());
        }
    }
}
