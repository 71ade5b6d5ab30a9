use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    data: Vec<T>,
    rows: usize,
    dim: usize,
}

pub type FloatMatrix = Matrix<f32>;
pub type IntMatrix = Matrix<i32>;

impl<T> Matrix<T> {
    pub fn new(data: Vec<T>, rows: usize, dim: usize) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::invalid(format!(
                "{} elements do not form a {rows}x{dim} matrix",
                data.len()
            )));
        }
        Ok(Matrix { data, rows, dim })
    }

    /// Row-major data of `dim`-wide rows. `dim` must be nonzero.
    pub fn from_flat(data: Vec<T>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} elements are not a whole number of {dim}-wide rows",
                data.len()
            )));
        }
        let rows = data.len() / dim;
        Ok(Matrix { data, rows, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Matrix {
            data: Vec::new(),
            rows: 0,
            dim,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl<T: Clone> Matrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Format {
                    row: i,
                    message: format!("row has {} columns, expected {dim}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            data,
            rows: rows.len(),
            dim,
        })
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Matrix {
            data: self.data[..n * self.dim].to_vec(),
            rows: n,
            dim: self.dim,
        }
    }
}

/// Dot product with f64 accumulation in index order.
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

pub fn l2_norm(v: &[f32]) -> f64 {
    dot_f64(v, v).sqrt()
}
