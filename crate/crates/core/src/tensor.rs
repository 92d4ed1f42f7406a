//! Dense row-major matrices and the handful of kernels the model needs.
//!
//! Everything is `f64`; the model is desk-scale and the test tolerances
//! assume 64-bit arithmetic end to end. The only deliberately tuned kernel
//! is [`Tensor2::matmul`] (i-k-j loop order so the inner loop streams rows
//! of the right operand).

use crate::error::{CoreError, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                op: "from_vec",
                left: format!("{rows}x{cols}"),
                right: format!("len {}", data.len()),
            });
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Build from nested rows; rows must all share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::EmptyInput("from_rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(CoreError::ShapeMismatch {
                    op: "from_rows",
                    left: format!("row len {cols}"),
                    right: format!("row len {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor2 {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform(lo, hi) entries from the given generator.
    pub fn random_uniform<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> Result<f64> {
        if self.rows != 1 || self.cols != 1 {
            return Err(CoreError::NonScalarLoss(self.rows, self.cols));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn shape_check(&self, other: &Tensor2, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(CoreError::ShapeMismatch {
                op,
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.shape_check(other, "add")?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Tensor2) -> Result<Tensor2> {
        self.shape_check(other, "sub")?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn mul_elem(&self, other: &Tensor2) -> Result<Tensor2> {
        self.shape_check(other, "mul_elem")?;
        Ok(self.zip(other, |a, b| a * b))
    }

    pub fn div_elem(&self, other: &Tensor2) -> Result<Tensor2> {
        self.shape_check(other, "div_elem")?;
        Ok(self.zip(other, |a, b| a / b))
    }

    fn zip(&self, other: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        self.shape_check(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Tensor2 {
        self.map(|v| v * c)
    }

    /// `self (m x k) * other (k x n) -> m x n`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a_ip) in a_row.iter().enumerate() {
                if a_ip == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ip * b;
                }
            }
        }
        Ok(Tensor2 {
            rows: m,
            cols: n,
            data: out,
        })
    }

    /// `self^T (k x m becomes m x k) * other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(CoreError::ShapeMismatch {
                op: "transpose_matmul",
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a_pi) in a_row.iter().enumerate() {
                if a_pi == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a_pi * b;
                }
            }
        }
        Ok(Tensor2 {
            rows: m,
            cols: n,
            data: out,
        })
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_transpose(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                op: "matmul_transpose",
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}x{}", other.rows, other.cols),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row.iter()) {
                    acc += a * b;
                }
                *o = acc;
            }
        }
        Ok(Tensor2 {
            rows: m,
            cols: n,
            data: out,
        })
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Horizontal concatenation of equally tall blocks.
    pub fn concat_cols(blocks: &[&Tensor2]) -> Result<Tensor2> {
        if blocks.is_empty() {
            return Err(CoreError::EmptyInput("concat_cols"));
        }
        let rows = blocks[0].rows;
        for b in blocks {
            if b.rows != rows {
                return Err(CoreError::ShapeMismatch {
                    op: "concat_cols",
                    left: format!("{rows} rows"),
                    right: format!("{} rows", b.rows),
                });
            }
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for b in blocks {
                out.data[r * cols + offset..r * cols + offset + b.cols].copy_from_slice(b.row(r));
                offset += b.cols;
            }
        }
        Ok(out)
    }

    /// Vertical concatenation of equally wide blocks.
    pub fn concat_rows(blocks: &[&Tensor2]) -> Result<Tensor2> {
        if blocks.is_empty() {
            return Err(CoreError::EmptyInput("concat_rows"));
        }
        let cols = blocks[0].cols;
        for b in blocks {
            if b.cols != cols {
                return Err(CoreError::ShapeMismatch {
                    op: "concat_rows",
                    left: format!("{cols} cols"),
                    right: format!("{} cols", b.cols),
                });
            }
        }
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor2> {
        if start > end || end > self.rows {
            return Err(CoreError::InvalidArgument(format!(
                "slice_rows {start}..{end} out of range for {} rows",
                self.rows
            )));
        }
        Ok(Tensor2 {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(indices.len(), self.cols);
        for (k, &r) in indices.iter().enumerate() {
            if r >= self.rows {
                return Err(CoreError::InvalidArgument(format!(
                    "gather_rows index {r} out of range for {} rows",
                    self.rows
                )));
            }
            out.row_mut(k).copy_from_slice(self.row(r));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let i = Tensor2::identity(2);
        assert_eq!(a.matmul(&i).unwrap(), a);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3"), "{err}");
    }

    #[test]
    fn transpose_variants_agree() {
        let mut rng = crate::rng::stream(3, &["tensor-test"]);
        let a = Tensor2::random_uniform(4, 5, -1.0, 1.0, &mut rng);
        let b = Tensor2::random_uniform(4, 3, -1.0, 1.0, &mut rng);
        let left = a.transpose_matmul(&b).unwrap();
        let right = a.transpose().matmul(&b).unwrap();
        for (x, y) in left.data().iter().zip(right.data().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let c = Tensor2::random_uniform(6, 5, -1.0, 1.0, &mut rng);
        let left = a.matmul_transpose(&c).unwrap();
        let right = a.matmul(&c.transpose()).unwrap();
        for (x, y) in left.data().iter().zip(right.data().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = Tensor2::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Tensor2::from_vec(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let cat = Tensor2::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(cat.row(0), &[1.0, 3.0, 4.0]);
        let v = Tensor2::concat_rows(&[&a, &a]).unwrap();
        assert_eq!(v.slice_rows(2, 4).unwrap(), a);
    }
}
