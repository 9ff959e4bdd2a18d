//! Dense 2D sequence tensor: `n` positions by `d` channels, row-major.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-position representation of a token sequence, shape `[n, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqTensor<S> {
    data: Vec<S>,
    rows: usize,
    cols: usize,
}

impl<S: Scalar> SeqTensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "SeqTensor requires n >= 1, d >= 1");
        SeqTensor {
            data: vec![S::zero(); rows * cols],
            rows,
            cols,
        }
    }

    /// Builds from a flat row-major buffer of length `rows * cols`.
    pub fn from_flat(data: Vec<S>, rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "SeqTensor requires n >= 1, d >= 1");
        assert_eq!(data.len(), rows * cols, "flat buffer length mismatch");
        SeqTensor { data, rows, cols }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        assert!(!rows.is_empty(), "SeqTensor requires at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        SeqTensor::from_flat(data, rows.len(), cols)
    }

    /// Number of positions `n`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of channels `d`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        SeqTensor {
            data: self.data.iter().map(|&x| f(x)).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Errors unless the channel count matches `expected`.
    pub fn expect_cols(&self, expected: usize, context: &str) -> Result<()> {
        if self.cols != expected {
            return Err(Error::dimension(
                context,
                format!("{expected} channels"),
                format!("{} channels", self.cols),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies channels `[start, start + len)` into a new tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.cols, "column slice out of range");
        let mut out = SeqTensor::zeros(self.rows, len);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + len]);
        }
        out
    }

    /// Concatenates tensors channel-wise; all parts must share the position
    /// count.
    pub fn concat_cols(parts: &[SeqTensor<S>]) -> Self {
        assert!(!parts.is_empty(), "nothing to concatenate");
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = SeqTensor::zeros(rows, cols);
        for i in 0..rows {
            let row = out.row_mut(i);
            let mut offset = 0;
            for p in parts {
                assert_eq!(p.rows, rows, "ragged concat");
                row[offset..offset + p.cols].copy_from_slice(p.row(i));
                offset += p.cols;
            }
        }
        out
    }
}
