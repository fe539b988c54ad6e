//! Dense row-major f64 matrix.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2D {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Tensor2D { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Tensor2D { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Tensor2D) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn check_shape(&self, rows: usize, cols: usize, context: &'static str) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::ShapeMismatch {
                context,
                got_rows: self.rows,
                got_cols: self.cols,
                want_rows: rows,
                want_cols: cols,
            });
        }
        Ok(())
    }

    /// self (m x k) * other (k x n), ikj loop order.
    pub fn matmul(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2D::zeros(m, n);
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate().take(k) {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self^T (k x m)^T=(m x k) ... computes self^T * other where
    /// self is (k x m), other is (k x n) -> (m x n).
    pub fn transpose_matmul(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.rows, other.rows, "transpose_matmul outer dims");
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = Tensor2D::zeros(m, n);
        for p in 0..k {
            let a_row = self.row(p);
            let b_row = other.row(p);
            for (i, &a) in a_row.iter().enumerate().take(m) {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self (m x k) * other^T where other is (n x k) -> (m x n).
    pub fn matmul_transpose(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.cols, other.cols, "matmul_transpose inner dims");
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Tensor2D::zeros(m, n);
        for i in 0..m {
            let a_row = self.row(i);
            for j in 0..n {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a_row[p] * b_row[p];
                }
                out.data[i * n + j] = acc;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor2D) {
        assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Vertical concatenation of row blocks.
    pub fn vstack(blocks: &[&Tensor2D]) -> Tensor2D {
        let cols = blocks[0].cols;
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            assert_eq!(b.cols, cols);
            data.extend_from_slice(&b.data);
        }
        Tensor2D { rows, cols, data }
    }

    /// Copy of rows [start, end).
    pub fn row_slice(&self, start: usize, end: usize) -> Tensor2D {
        Tensor2D {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor2D::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor2D::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_variants_agree_with_explicit_transpose() {
        let a = Tensor2D::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 5.0, -6.0]);
        let b = Tensor2D::from_vec(2, 4, vec![1.0, 0.0, 2.0, 1.0, -1.0, 3.0, 0.0, 2.0]);
        // a^T * b via transpose_matmul
        let got = a.transpose_matmul(&b);
        let mut at = Tensor2D::zeros(3, 2);
        for i in 0..2 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        assert_eq!(got, at.matmul(&b));

        // a * b2^T via matmul_transpose
        let b2 = Tensor2D::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.5 - 2.0).collect());
        let got = a.matmul_transpose(&b2);
        let mut b2t = Tensor2D::zeros(3, 4);
        for i in 0..4 {
            for j in 0..3 {
                b2t.set(j, i, b2.get(i, j));
            }
        }
        assert_eq!(got, a.matmul(&b2t));
    }
}
