use super::real::Real;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Mat<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U>(&self, f: impl FnMut(T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Rows in the given order.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self::from_fn(order.len(), self.cols, |r, c| self.get(order[r], c))
    }
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::from_f64(0.0); rows * cols],
        }
    }

    /// `self · w` for a constant right factor.
    pub fn mul_const(&self, w: &Mat<f64>) -> Self {
        debug_assert_eq!(self.cols, w.rows);
        let mut out = Self::zeros(self.rows, w.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                for c in 0..w.cols {
                    let o = &mut out.data[r * w.cols + c];
                    *o = *o + a * T::from_f64(w.get(k, c));
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn mul_transpose(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.cols);
        Self::from_fn(self.rows, other.rows, |r, c| {
            self.row(r)
                .iter()
                .zip(other.row(c))
                .fold(T::from_f64(0.0), |acc, (&a, &b)| acc + a * b)
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Adds `bias` to every row.
    pub fn add_row(&self, bias: &[f64]) -> Self {
        debug_assert_eq!(self.cols, bias.len());
        Self::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, c) + T::from_f64(bias[c])
        })
    }
}
