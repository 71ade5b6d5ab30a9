//! fvecs / ivecs files and synthetic datasets.
//!
//! Both file formats store, per vector, a little-endian `i32` dimension
//! followed by that many little-endian 4-byte values (`f32` for fvecs,
//! `i32` for ivecs).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{FloatMatrix, IntMatrix, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    pub data: FloatMatrix,
    pub source: String,
}

impl VectorDataset {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }
}

fn parse_vecs<T>(bytes: &[u8], decode: impl Fn([u8; 4]) -> T) -> Result<Matrix<T>> {
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    let mut pos = 0usize;
    let mut row = 0usize;
    while pos < bytes.len() {
        let Some(header) = bytes.get(pos..pos + 4) else {
            return Err(Error::Format {
                row,
                message: "truncated dimension header".into(),
            });
        };
        let d = i32::from_le_bytes(header.try_into().unwrap());
        if d <= 0 {
            return Err(Error::Format {
                row,
                message: format!("invalid dimension {d}"),
            });
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format {
                    row,
                    message: format!("dimension {d} differs from first row's {expected}"),
                })
            }
            Some(_) => {}
        }
        pos += 4;
        let Some(payload) = bytes.get(pos..pos + 4 * d) else {
            return Err(Error::Format {
                row,
                message: format!("truncated payload, expected {d} values"),
            });
        };
        data.extend(payload.chunks_exact(4).map(|c| decode(c.try_into().unwrap())));
        pos += 4 * d;
        row += 1;
    }
    match dim {
        None => Ok(Matrix::empty(0)),
        Some(d) => Matrix::new(data, row, d),
    }
}

fn write_vecs<T: Copy>(m: &Matrix<T>, path: &Path, encode: impl Fn(T) -> [u8; 4]) -> Result<()> {
    let dim = i32::try_from(m.dim()).map_err(|_| Error::invalid("dimension exceeds i32"))?;
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.iter_rows() {
        w.write_all(&dim.to_le_bytes())?;
        for &x in row {
            w.write_all(&encode(x))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<FloatMatrix> {
    let m = parse_vecs(bytes, f32::from_le_bytes)?;
    if let Some(i) = m.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::Format {
            row: i / m.dim(),
            message: "non-finite component".into(),
        });
    }
    Ok(m)
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorDataset> {
    let path = path.as_ref();
    let data = parse_fvecs(&fs::read(path)?)?;
    Ok(VectorDataset {
        data,
        source: format!("fvecs:{}", path.display()),
    })
}

pub fn write_fvecs(data: &FloatMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_vecs(data, path.as_ref(), f32::to_le_bytes)
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<IntMatrix> {
    parse_vecs(bytes, i32::from_le_bytes)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<IntMatrix> {
    parse_ivecs(&fs::read(path)?)
}

pub fn write_ivecs(data: &IntMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_vecs(data, path.as_ref(), i32::to_le_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distribution {
    /// Components drawn from `Normal(0, 1/dim)`, then each row L2-normalized.
    #[default]
    GaussianNormalized,
}

/// Identifier of the pinned generator, recorded in dataset provenance.
///
/// Row `r` uses ChaCha8 keyed with the little-endian seed (zero-padded to 32
/// bytes) on stream `r`. Each `u64` draw becomes a uniform `(u >> 11) · 2⁻⁵³`,
/// and consecutive pairs `(u1, u2)` give the Box-Muller pair
/// `√(−2 ln(1 − u1)) · (cos 2πu2, sin 2πu2)`.
pub const GENERATOR_ID: &str = "chacha8-stream-per-row+box-muller/v1";

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn gaussian_row(seed: u64, row: u64, dim: usize, out: &mut [f32]) {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(row);
    let sd = (1.0 / dim as f64).sqrt();
    let mut values = Vec::with_capacity(dim + 1);
    while values.len() < dim {
        let u1 = uniform(&mut rng);
        let u2 = uniform(&mut rng);
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        values.push(sd * r * theta.cos());
        values.push(sd * r * theta.sin());
    }
    values.truncate(dim);
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (o, v) in out.iter_mut().zip(&values) {
        *o = (v / norm) as f32;
    }
}

/// Deterministic synthetic dataset with unit-norm rows.
pub fn generate_synthetic(
    n: usize,
    dim: usize,
    seed: u64,
    distribution: Distribution,
) -> Result<VectorDataset> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid("n and dim must be at least 1"));
    }
    let mut data = vec![0f32; n * dim];
    match distribution {
        Distribution::GaussianNormalized => data
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(r, out)| gaussian_row(seed, r as u64, dim, out)),
    }
    Ok(VectorDataset {
        data: FloatMatrix::new(data, n, dim)?,
        source: format!("synthetic:gaussian-normalized:{GENERATOR_ID}:seed={seed}:n={n}:dim={dim}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::l2_norm;

    fn fvecs_bytes(rows: &[&[f32]]) -> Vec<u8> {
        let mut out = Vec::new();
        for r in rows {
            out.extend_from_slice(&(r.len() as i32).to_le_bytes());
            for x in *r {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn fvecs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fvecs");
        let ds = generate_synthetic(100, 17, 3, Distribution::GaussianNormalized).unwrap();
        write_fvecs(&ds.data, &path).unwrap();
        let back = read_fvecs(&path).unwrap();
        assert_eq!(back.data, ds.data);
        assert_eq!(fs::read(&path).unwrap().len(), 100 * (4 + 17 * 4));
    }

    #[test]
    fn fvecs_mismatched_dims() {
        let bytes = fvecs_bytes(&[&[1.0, 2.0], &[1.0, 2.0], &[3.0]]);
        match parse_fvecs(&bytes) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fvecs_truncated_and_empty() {
        let bytes = fvecs_bytes(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert!(matches!(
            parse_fvecs(&bytes[..bytes.len() - 2]),
            Err(Error::Format { row: 1, .. })
        ));
        assert!(matches!(
            parse_fvecs(&bytes[..14]),
            Err(Error::Format { row: 1, .. })
        ));
        let empty = parse_fvecs(&[]).unwrap();
        assert_eq!((empty.rows(), empty.dim()), (0, 0));
    }

    #[test]
    fn ivecs_cases() {
        let mut bytes = Vec::new();
        for x in [3i32, 0, 5, 3] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let m = parse_ivecs(&bytes).unwrap();
        assert_eq!((m.rows(), m.dim()), (1, 3));
        assert_eq!(m.row(0), &[0, 5, 3]);
        assert!(parse_ivecs(&bytes[..12]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.ivecs");
        let gt = IntMatrix::new((0..40).collect(), 4, 10).unwrap();
        write_ivecs(&gt, &path).unwrap();
        assert_eq!(read_ivecs(&path).unwrap(), gt);
    }

    #[test]
    fn synthetic_is_deterministic_and_unit() {
        let a = generate_synthetic(10, 128, 7, Distribution::GaussianNormalized).unwrap();
        let b = generate_synthetic(10, 128, 7, Distribution::GaussianNormalized).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(10, 128, 8, Distribution::GaussianNormalized).unwrap();
        assert_ne!(a.data, c.data);
        for r in a.data.iter_rows() {
            assert!((l2_norm(r) - 1.0).abs() < 1e-6);
        }
        assert!(a.source.contains(GENERATOR_ID));
        // Rows are independent of n.
        let big = generate_synthetic(20, 128, 7, Distribution::GaussianNormalized).unwrap();
        assert_eq!(big.data.head(10), a.data);
    }

    #[test]
    fn synthetic_values_are_pinned() {
        let ds = generate_synthetic(2, 4, 7, Distribution::GaussianNormalized).unwrap();
        let bits: Vec<u32> = ds.data.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(
            bits,
            [
                3212421890, 1046024051, 3164785244, 1030969222, 3188191353, 1059637870, 1046017933,
                3207955570
            ]
        );
    }

    #[test]
    fn synthetic_components_are_small() {
        let ds = generate_synthetic(1000, 128, 11, Distribution::GaussianNormalized).unwrap();
        let max = ds.data.as_slice().iter().fold(0f32, |m, x| m.max(x.abs()));
        assert!(max < 0.5, "max |component| = {max}");
        let mean: f64 =
            ds.data.as_slice().iter().map(|&x| f64::from(x)).sum::<f64>() / ds.data.as_slice().len() as f64;
        assert!(mean.abs() < 0.002);
    }

    #[test]
    fn synthetic_rejects_empty_shape() {
        assert!(generate_synthetic(0, 4, 1, Distribution::GaussianNormalized).is_err());
        assert!(generate_synthetic(4, 0, 1, Distribution::GaussianNormalized).is_err());
    }
}
