//! Dense row-major matrices and vectors of `f64`.
//!
//! All products accumulate each output element over the shared index in
//! ascending order with a single accumulator, so results are independent of
//! batch width and of how work is split across threads. Parallelism is over
//! output rows only.

use rayon::prelude::*;

use crate::error::{Result, UrnError};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

// Below this many output elements a product is not worth fanning out to the
// thread pool.
const PAR_THRESHOLD: usize = 16 * 1024;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(UrnError::shape(
                "Matrix::from_vec",
                format!(
                    "data length {} does not equal {}x{}",
                    data.len(),
                    rows,
                    cols
                ),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * v`.
    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(UrnError::shape(
                "matvec",
                format!(
                    "matrix is {}x{}, vector has length {}",
                    self.rows,
                    self.cols,
                    v.len()
                ),
            ));
        }
        let mut out = vec![0.0; self.rows];
        let work = |(o, row): (&mut f64, &[f64])| {
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.as_slice()) {
                acc += a * b;
            }
            *o = acc;
        };
        if self.rows * self.cols >= PAR_THRESHOLD {
            out.par_iter_mut()
                .zip(self.data.par_chunks(self.cols))
                .for_each(work);
        } else {
            out.iter_mut()
                .zip(self.data.chunks(self.cols))
                .for_each(work);
        }
        Ok(Vector::from(out))
    }

    /// `self * b`.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(UrnError::shape(
                "matmul",
                format!(
                    "left is {}x{}, right is {}x{}",
                    self.rows, self.cols, b.rows, b.cols
                ),
            ));
        }
        let n = b.cols;
        let mut out = Matrix::zeros(self.rows, n);
        let kernel = |(out_row, a_row): (&mut [f64], &[f64])| {
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = &b.data[k * n..(k + 1) * n];
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        };
        if self.rows * n >= PAR_THRESHOLD {
            out.data
                .par_chunks_mut(n)
                .zip(self.data.par_chunks(self.cols))
                .for_each(kernel);
        } else {
            out.data
                .chunks_mut(n)
                .zip(self.data.chunks(self.cols))
                .for_each(kernel);
        }
        Ok(out)
    }

    /// `self * b^T`. Both operands are traversed row-contiguously, which makes
    /// this the kernel of choice for gradient outer-product accumulation.
    pub fn matmul_bt(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.cols {
            return Err(UrnError::shape(
                "matmul_bt",
                format!(
                    "left is {}x{}, right is {}x{} (shared inner dim must be cols)",
                    self.rows, self.cols, b.rows, b.cols
                ),
            ));
        }
        let n = b.rows;
        let k = self.cols;
        let mut out = Matrix::zeros(self.rows, n);
        let kernel = |(out_row, a_row): (&mut [f64], &[f64])| {
            for (o, b_row) in out_row.iter_mut().zip(b.data.chunks(k)) {
                let mut acc = 0.0;
                for (x, y) in a_row.iter().zip(b_row) {
                    acc += x * y;
                }
                *o += acc;
            }
        };
        if self.rows * n >= PAR_THRESHOLD {
            out.data
                .par_chunks_mut(n)
                .zip(self.data.par_chunks(k))
                .for_each(kernel);
        } else {
            out.data
                .chunks_mut(n)
                .zip(self.data.chunks(k))
                .for_each(kernel);
        }
        Ok(out)
    }
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::Rng;

    fn matvec_oracle(m: &Matrix, v: &Vector) -> Vec<f64> {
        // Deliberately naive triple-index loop, kept independent of the
        // production kernel.
        let mut out = vec![0.0; m.rows()];
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                out[i] += m.get(i, j) * v[j];
            }
        }
        out
    }

    #[test]
    fn matvec_identity() {
        let m = Matrix::identity(2);
        let v = Vector::from(vec![3.0, -1.0]);
        let out = m.matvec(&v).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn matvec_zero_matrix() {
        let m = Matrix::zeros(3, 4);
        let v = Vector::from(vec![1.0, 2.0, 3.0, 4.0]);
        let out = m.matvec(&v).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matvec_matches_triple_loop_oracle() {
        let mut rng = Rng::new(7);
        let m = Matrix::from_fn(3, 3, |_, _| rng.next_normal());
        let v = Vector::from((0..3).map(|_| rng.next_normal()).collect::<Vec<_>>());
        let got = m.matvec(&v).unwrap();
        let want = matvec_oracle(&m, &v);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn matvec_oracle_on_100_random_instances() {
        let mut rng = Rng::new(42);
        for case in 0..100 {
            let rows = 1 + (rng.next_u64() % 64) as usize;
            let cols = 1 + (rng.next_u64() % 64) as usize;
            let m = Matrix::from_fn(rows, cols, |_, _| rng.next_normal());
            let v = Vector::from((0..cols).map(|_| rng.next_normal()).collect::<Vec<_>>());
            let got = m.matvec(&v).unwrap();
            let want = matvec_oracle(&m, &v);
            for (g, w) in got.iter().zip(&want) {
                let rel = (g - w).abs() / w.abs().max(1e-30);
                assert!(
                    rel <= 1e-12 || (g - w).abs() <= 1e-12,
                    "case {case}: {g} vs {w}"
                );
            }
        }
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let m = Matrix::zeros(2, 3);
        let v = Vector::zeros(5);
        let err = m.matvec(&v).unwrap_err().to_string();
        assert!(err.contains("2x3"), "{err}");
        assert!(err.contains('5'), "{err}");
    }

    #[test]
    fn matmul_batch_column_matches_matvec() {
        // A batched product must reproduce the single-vector product exactly,
        // column by column.
        let mut rng = Rng::new(3);
        let m = Matrix::from_fn(17, 13, |_, _| rng.next_normal());
        let batch = Matrix::from_fn(13, 5, |_, _| rng.next_normal());
        let prod = m.matmul(&batch).unwrap();
        for b in 0..5 {
            let col = Vector::from((0..13).map(|j| batch.get(j, b)).collect::<Vec<_>>());
            let single = m.matvec(&col).unwrap();
            for i in 0..17 {
                assert_eq!(prod.get(i, b), single[i]);
            }
        }
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let mut rng = Rng::new(11);
        let a = Matrix::from_fn(6, 9, |_, _| rng.next_normal());
        let b = Matrix::from_fn(4, 9, |_, _| rng.next_normal());
        let fast = a.matmul_bt(&b).unwrap();
        let slow = a.matmul(&b.transpose()).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                assert!((fast.get(i, j) - slow.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = Rng::new(5);
        let a = Matrix::from_fn(7, 3, |_, _| rng.next_normal());
        assert_eq!(a.transpose().transpose(), a);
    }
}
