use std::fmt;

use super::scalar::{Scalar, StridedRef};
use crate::error::{Error, Result};

/// Dense row-major 2-D array; the only numeric container in the engine.
#[derive(Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: fmt::Debug> fmt::Debug for Matrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

impl<S: Scalar> Matrix<S> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows<R: AsRef<[S]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "from_rows",
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, S::zero())
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, S::one())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.rows, other.cols)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(S) -> S) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
    }

    pub(crate) fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(())
    }

    /// `self += other`, exact shapes.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: S, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + k * b;
        }
        Ok(())
    }

    /// Adds a `1 x cols` row to every row. This is the only broadcast the
    /// engine uses (bias addition).
    pub fn add_row_assign(&mut self, row: &Self) -> Result<()> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::shape(
                "add_row",
                format!("row {:?} for matrix {:?}", row.shape(), self.shape()),
            ));
        }
        for chunk in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (a, &b) in chunk.iter_mut().zip(&row.data) {
                *a = *a + b;
            }
        }
        Ok(())
    }

    /// Column sums as a `1 x cols` row (bias gradients).
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(r)) {
                *o = *o + v;
            }
        }
        out
    }

    fn strided(&self, transposed: bool) -> StridedRef<'_, S> {
        if transposed {
            StridedRef {
                data: &self.data,
                row_stride: 1,
                col_stride: self.cols,
            }
        } else {
            StridedRef {
                data: &self.data,
                row_stride: self.cols,
                col_stride: 1,
            }
        }
    }

    /// General product into `self`:
    /// `self = alpha * op(a) * op(b) + beta * self`, with `op` an optional
    /// transpose.
    pub fn gemm_into(
        &mut self,
        alpha: S,
        a: &Self,
        transpose_a: bool,
        b: &Self,
        transpose_b: bool,
        beta: S,
    ) -> Result<()> {
        let (m, ka) = if transpose_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (kb, n) = if transpose_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
        if ka != kb || self.rows != m || self.cols != n {
            return Err(Error::shape(
                "gemm",
                format!(
                    "op(a) {m}x{ka} * op(b) {kb}x{n} into {:?}",
                    self.shape()
                ),
            ));
        }
        S::gemm(
            m,
            ka,
            n,
            alpha,
            a.strided(transpose_a),
            b.strided(transpose_b),
            beta,
            &mut self.data,
        );
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }
}

/// Standard matrix product.
pub fn matmul<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    out.gemm_into(S::one(), a, false, b, false, S::zero())?;
    Ok(out)
}
