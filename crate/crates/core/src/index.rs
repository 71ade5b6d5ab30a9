//! Immutable searchable index and its on-disk format.
//!
//! File layout, all little-endian:
//!
//! | field          | type              |
//! |----------------|-------------------|
//! | magic          | `b"XFBQ"`         |
//! | version        | u32 (= 1)         |
//! | n              | u32               |
//! | dim            | u32               |
//! | doc_bits       | u8                |
//! | query_bits     | u8                |
//! | scale          | f64               |
//! | has_originals  | u8 (0 or 1)       |
//! | planes         | n · doc_bits · ceil(dim/64) u64, per row plane 0 first |
//! | originals      | n · dim f32, row-major, only if has_originals |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::bitplane::{words_per_plane, PackedMatrix};
use crate::error::{Error, Result};
use crate::matrix::{l2_norm, FloatMatrix};
use crate::quant::BitWidth;

pub const MAGIC: [u8; 4] = *b"XFBQ";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 27;

pub const DEFAULT_DOC_BITS: u8 = 3;
pub const DEFAULT_QUERY_BITS: u8 = 4;
pub const DEFAULT_SCALE_PERCENTILE: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub doc_bits: BitWidth,
    pub query_bits: BitWidth,
    pub scale: f64,
    pub dim: usize,
}

impl QuantParams {
    pub fn new(doc_bits: BitWidth, query_bits: BitWidth, scale: f64, dim: usize) -> Result<Self> {
        let p = QuantParams {
            doc_bits,
            query_bits,
            scale,
            dim,
        };
        p.validate()?;
        Ok(p)
    }

    /// Default widths (3-bit documents, 4-bit queries) at the given scale.
    pub fn with_defaults(scale: f64, dim: usize) -> Result<Self> {
        Self::new(
            BitWidth::new(DEFAULT_DOC_BITS)?,
            BitWidth::new(DEFAULT_QUERY_BITS)?,
            scale,
            dim,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Reciprocal of the `percentile`-th quantile of `|component|` over every
/// entry. `percentile = 1.0` gives `1 / max |component|`.
///
/// The quantile uses the nearest-rank rule: the `ceil(p · M)`-th smallest of
/// the `M` absolute values.
pub fn estimate_scale(vectors: &FloatMatrix, percentile: f64) -> Result<f64> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::invalid(format!(
            "percentile must be in (0, 1], got {percentile}"
        )));
    }
    let mut abs: Vec<f32> = vectors.as_slice().iter().map(|x| x.abs()).collect();
    if abs.is_empty() {
        return Err(Error::invalid("cannot estimate scale of an empty matrix"));
    }
    if let Some(index) = abs.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let rank = ((percentile * abs.len() as f64).ceil() as usize).clamp(1, abs.len());
    let (_, q, _) = abs.select_nth_unstable_by(rank - 1, f32::total_cmp);
    if *q == 0.0 {
        return Err(Error::invalid(
            "quantile of |component| is zero; scale is undefined",
        ));
    }
    Ok(1.0 / f64::from(*q))
}

/// L2-normalizes every row. Fails listing every zero-norm row.
pub fn normalize_rows(vectors: &FloatMatrix) -> Result<FloatMatrix> {
    let zero: Vec<usize> = vectors
        .iter_rows()
        .enumerate()
        .filter(|(_, r)| l2_norm(r) == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !zero.is_empty() {
        return Err(Error::ZeroNormRows(zero));
    }
    let mut data = Vec::with_capacity(vectors.as_slice().len());
    for r in vectors.iter_rows() {
        let norm = l2_norm(r);
        data.extend(r.iter().map(|&x| (f64::from(x) / norm) as f32));
    }
    FloatMatrix::new(data, vectors.rows(), vectors.dim())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    params: QuantParams,
    packed: PackedMatrix,
    originals: Option<FloatMatrix>,
}

/// Quantizes every document row with `params.doc_bits` at `params.scale`.
///
/// Originals are retained for exact refinement; drop them with
/// [`Index::without_originals`].
pub fn build_index(vectors: &FloatMatrix, params: QuantParams, normalize: bool) -> Result<Index> {
    params.validate()?;
    if vectors.dim() != params.dim && !(vectors.is_empty() && vectors.dim() == 0) {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            actual: vectors.dim(),
        });
    }
    let originals = if normalize {
        normalize_rows(vectors)?
    } else {
        vectors.clone()
    };
    let originals = if originals.is_empty() {
        FloatMatrix::empty(params.dim)
    } else {
        originals
    };
    let packed = if originals.is_empty() {
        PackedMatrix::empty(params.dim, params.doc_bits)
    } else {
        PackedMatrix::quantize(originals.as_slice(), params.dim, params.doc_bits, params.scale)?
    };
    Ok(Index {
        params,
        packed,
        originals: Some(originals),
    })
}

impl Index {
    pub fn params(&self) -> &QuantParams {
        &self.params
    }

    pub fn packed(&self) -> &PackedMatrix {
        &self.packed
    }

    pub fn originals(&self) -> Option<&FloatMatrix> {
        self.originals.as_ref()
    }

    pub fn len(&self) -> usize {
        self.packed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packed.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn without_originals(mut self) -> Self {
        self.originals = None;
        self
    }

    /// Rows whose norm is outside `1 ± tol`.
    pub fn unnormalized_rows(&self, tol: f64) -> Vec<usize> {
        self.originals
            .as_ref()
            .map_or_else(Vec::new, |o| check_unit_rows(o, tol))
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.packed.size_bytes() + self.originals.as_ref().map_or(0, |o| o.as_slice().len() * 4)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = u32::try_from(self.len()).map_err(|_| Error::invalid("more than u32::MAX rows"))?;
        let dim = u32::try_from(self.dim()).map_err(|_| Error::invalid("dimension exceeds u32"))?;
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        header.extend_from_slice(&n.to_le_bytes());
        header.extend_from_slice(&dim.to_le_bytes());
        header.push(self.params.doc_bits.get());
        header.push(self.params.query_bits.get());
        header.extend_from_slice(&self.params.scale.to_le_bytes());
        header.push(u8::from(self.originals.is_some()));
        w.write_all(&header)?;

        let mut buf = Vec::with_capacity(1 << 16);
        for chunk in self.packed.raw().chunks(8192) {
            buf.clear();
            buf.extend(chunk.iter().flat_map(|x| x.to_le_bytes()));
            w.write_all(&buf)?;
        }
        if let Some(o) = &self.originals {
            for chunk in o.as_slice().chunks(16384) {
                buf.clear();
                buf.extend(chunk.iter().flat_map(|x| x.to_le_bytes()));
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_section(&mut r, &mut magic, "magic")?;
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let mut header = [0u8; HEADER_LEN - 4];
        read_section(&mut r, &mut header[..4], "version")?;
        let version = u32::from_le_bytes(header[..4].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        read_section(&mut r, &mut header[4..], "header")?;
        let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let doc_bits = BitWidth::new(header[12])?;
        let query_bits = BitWidth::new(header[13])?;
        let scale = f64::from_le_bytes(header[14..22].try_into().unwrap());
        let has_originals = match header[22] {
            0 => false,
            1 => true,
            other => return Err(Error::invalid(format!("bad has_originals flag {other}"))),
        };
        let params = QuantParams::new(doc_bits, query_bits, scale, dim)?;

        let words = n * usize::from(doc_bits.get()) * words_per_plane(dim);
        let mut bytes = vec![0u8; words * 8];
        read_section(&mut r, &mut bytes, "planes")?;
        let planes: Vec<u64> = bytes
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let packed = PackedMatrix::from_raw(planes, n, dim, doc_bits)?;

        let originals = if has_originals {
            let mut bytes = vec![0u8; n * dim * 4];
            read_section(&mut r, &mut bytes, "originals")?;
            let data: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Some(FloatMatrix::new(data, n, dim)?)
        } else {
            None
        };

        let trailing = std::io::copy(&mut r, &mut std::io::sink())?;
        if trailing > 0 {
            return Err(Error::TrailingBytes(trailing));
        }
        Ok(Index {
            params,
            packed,
            originals,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

fn read_section<R: Read>(r: &mut R, buf: &mut [u8], section: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncated { section },
        _ => Error::Io(e),
    })
}

/// Writes the index to a sibling temporary file and renames it into place,
/// so a failed save never leaves a partial index at `path`.
pub fn save_index(idx: &Index, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let result = File::create(&tmp)
        .map_err(Error::from)
        .and_then(|f| idx.write_to(BufWriter::new(f)))
        .and_then(|()| fs::rename(&tmp, path).map_err(Error::from));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Index> {
    Index::read_from(BufReader::new(File::open(path)?))
}

/// Rows whose L2 norm is outside `1 ± tol`.
pub fn check_unit_rows(vectors: &FloatMatrix, tol: f64) -> Vec<usize> {
    (0..vectors.rows())
        .into_par_iter()
        .filter(|&i| (l2_norm(vectors.row(i)) - 1.0).abs() > tol)
        .collect()
}
