//! Dense row-major matrices plus the validated wrappers used by the
//! factorizations: [`NonNegMatrix`] (entrywise `≥ 0`, finite) and
//! [`LabelMatrix`] (one-hot class indicator).

use std::ops::{Index, IndexMut};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::Scalar;

/// Dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Dot product of two equal-length slices.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

impl<T: Scalar> Mat<T> {
    /// Zero matrix. Panics on empty dimensions; matrices in this crate are
    /// always at least 1x1.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Build from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "buffer length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Build from nested rows; all rows must share one length.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Dimension("matrix must be at least 1x1".into()));
        }
        let cols = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "row {bad} has length {}, expected {cols}",
                rows[bad].len()
            )));
        }
        let nrows = rows.len();
        Ok(Mat {
            rows: nrows,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Build by evaluating `f(row, col)` at every position.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
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

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j` gathered into a new vector.
    pub fn col_to_vec(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Mutable views of two distinct rows.
    pub fn two_rows_mut(&mut self, p: usize, q: usize) -> (&mut [T], &mut [T]) {
        assert!(p != q, "rows must be distinct");
        let cols = self.cols;
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let (head, tail) = self.data.split_at_mut(hi * cols);
        let lo_row = &mut head[lo * cols..(lo + 1) * cols];
        let hi_row = &mut tail[..cols];
        if p < q {
            (lo_row, hi_row)
        } else {
            (hi_row, lo_row)
        }
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * rhs`. Accumulates along the inner dimension in ascending index
    /// order, so the rounding matches a plain dot-product evaluation.
    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a_ik) in a_row.iter().enumerate() {
                let b_row = rhs.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        }
        out
    }

    /// `selfᵀ * rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.rows, rhs.rows, "t_matmul row count mismatch");
        let mut out = Mat::zeros(self.cols, rhs.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = rhs.row(r);
            for (i, &a_ri) in a_row.iter().enumerate() {
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ri * b;
                }
            }
        }
        out
    }

    /// `self * rhsᵀ` without materializing the transpose.
    pub fn matmul_t(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.cols, "matmul_t column count mismatch");
        let mut out = Mat::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..rhs.rows {
                out[(i, j)] = dot(a_row, rhs.row(j));
            }
        }
        out
    }

    /// Entrywise map into a new matrix.
    pub fn map(&self, f: impl Fn(T) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        self.map(|v| v * s)
    }

    /// Squared Frobenius norm.
    pub fn sq_fro_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> T {
        self.sq_fro_norm().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_entry(&self) -> T {
        self.data.iter().fold(T::infinity(), |acc, &v| acc.min(v))
    }

    pub fn max_entry(&self) -> T {
        self.data
            .iter()
            .fold(T::neg_infinity(), |acc, &v| acc.max(v))
    }

    /// `‖self − rhs‖_F`.
    pub fn distance_fro(&self, rhs: &Mat<T>) -> T {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    /// `Σ_ij self_ij · rhs_ij`.
    pub fn inner(&self, rhs: &Mat<T>) -> T {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        dot(&self.data, &rhs.data)
    }
}

impl<T: Scalar> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

// Serialized as nested rows so model JSON stays human-readable.
impl<T: Scalar> Serialize for Mat<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[T]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Mat<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(deserializer)?;
        Mat::from_rows(rows).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Dense matrix validated to be finite and entrywise non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegMatrix<T> {
    inner: Mat<T>,
}

impl<T: Scalar> NonNegMatrix<T> {
    /// Validate and wrap. Fails with `NumericError` on NaN/Inf entries and
    /// `NonNegativityError` on any negative entry.
    pub fn new(m: Mat<T>) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::Numeric("matrix contains NaN or Inf".into()));
        }
        for i in 0..m.rows() {
            if let Some(j) = m.row(i).iter().position(|v| *v < T::zero()) {
                return Err(Error::NonNegativity(format!(
                    "negative entry {} at ({i}, {j})",
                    m[(i, j)]
                )));
            }
        }
        Ok(NonNegMatrix { inner: m })
    }

    pub fn as_mat(&self) -> &Mat<T> {
        &self.inner
    }

    pub fn into_mat(self) -> Mat<T> {
        self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.rows()
    }

    pub fn cols(&self) -> usize {
        self.inner.cols()
    }
}

/// One-hot class indicator `Q` with `C` rows (classes) and `N` columns
/// (samples). Stored as the per-sample label vector; every column of the
/// materialized indicator sums to exactly one by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    classes: usize,
    labels: Vec<usize>,
}

impl LabelMatrix {
    pub fn new(classes: usize, labels: Vec<usize>) -> Result<Self> {
        if classes == 0 || labels.is_empty() {
            return Err(Error::Label(
                "label matrix needs at least one class and one sample".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(LabelMatrix { classes, labels })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of samples per class.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Materialize the dense `C x N` 0/1 indicator.
    pub fn indicator<T: Scalar>(&self) -> Mat<T> {
        let mut q = Mat::zeros(self.classes, self.labels.len());
        for (n, &c) in self.labels.iter().enumerate() {
            q[(c, n)] = T::one();
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_example() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Mat::from_rows(vec![vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.row(0), &[19.0, 22.0]);
        assert_eq!(c.row(1), &[43.0, 50.0]);
    }

    #[test]
    fn transpose_products_agree_with_explicit_transpose() {
        let a = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0);
        let b = Mat::from_fn(4, 2, |i, j| (i as f64 - j as f64) * 0.21);
        let via_t = a.transpose().matmul(&b);
        let direct = a.t_matmul(&b);
        assert_eq!(via_t, direct);

        let c = Mat::from_fn(5, 3, |i, j| (i + 2 * j) as f64 * 0.11);
        assert_eq!(a.matmul_t(&c), a.matmul(&c.transpose()));
    }

    #[test]
    fn from_rows_rejects_ragged_input() {
        let err = Mat::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert_eq!(err.code(), "DimensionError");
    }

    #[test]
    fn nonneg_matrix_rejects_negatives_and_nan() {
        let m = Mat::from_rows(vec![vec![1.0, -0.5]]).unwrap();
        assert_eq!(NonNegMatrix::new(m).unwrap_err().code(), "NonNegativityError");
        let m = Mat::from_rows(vec![vec![1.0, f64::NAN]]).unwrap();
        assert_eq!(NonNegMatrix::new(m).unwrap_err().code(), "NumericError");
    }

    #[test]
    fn label_matrix_columns_are_one_hot() {
        let q = LabelMatrix::new(3, vec![0, 2, 1, 2]).unwrap();
        let ind: Mat<f64> = q.indicator();
        assert_eq!(ind.rows(), 3);
        assert_eq!(ind.cols(), 4);
        for n in 0..4 {
            let col_sum: f64 = (0..3).map(|c| ind[(c, n)]).sum();
            assert_eq!(col_sum, 1.0);
        }
        assert_eq!(q.counts(), vec![1, 1, 2]);
    }

    #[test]
    fn label_matrix_rejects_out_of_range() {
        assert_eq!(
            LabelMatrix::new(2, vec![0, 2]).unwrap_err().code(),
            "LabelError"
        );
    }

    #[test]
    fn mat_serde_round_trip() {
        let m = Mat::from_fn(3, 2, |i, j| i as f64 + 0.25 * j as f64);
        let json = serde_json::to_string(&m).unwrap();
        let back: Mat<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
