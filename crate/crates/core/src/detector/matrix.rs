use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Row-major `f64` matrix used for activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_embeddings(m: &EmbeddingMatrix) -> Self {
        Matrix {
            rows: m.count(),
            cols: m.dim(),
            data: m.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// Scales each row to unit Euclidean norm.
    pub fn normalize_rows(&mut self) -> Result<()> {
        let cols = self.cols;
        for (i, row) in self.data.chunks_exact_mut(cols).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Data(format!("row {i} has zero norm")));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(())
    }

    /// Rows gathered by index.
    pub fn gather(&self, indices: impl IntoIterator<Item = usize>) -> Matrix {
        let mut data = Vec::new();
        let mut rows = 0;
        for i in indices {
            data.extend_from_slice(self.row(i));
            rows += 1;
        }
        Matrix {
            rows,
            cols: self.cols,
            data,
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators, combined in a fixed order.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `x · Wᵀ + b` for a weight stored as `out × in`.
pub(crate) fn affine(x: &Matrix, weight: &[f64], bias: &[f64]) -> Matrix {
    let out_dim = bias.len();
    let mut y = Matrix::zeros(x.rows, out_dim);
    for (xi, yi) in x.row_iter().zip(y.data.chunks_exact_mut(out_dim)) {
        for (j, yij) in yi.iter_mut().enumerate() {
            *yij = bias[j] + dot(xi, &weight[j * x.cols..(j + 1) * x.cols]);
        }
    }
    y
}

/// Gradients of `x · Wᵀ + b` given the upstream gradient `dy`:
/// returns `(dW, db, dx)`; `dx` is skipped when `need_dx` is false.
pub(crate) fn affine_backward(
    x: &Matrix,
    weight: &[f64],
    dy: &Matrix,
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Option<Matrix>) {
    let in_dim = x.cols;
    let out_dim = dy.cols;
    let mut dw = vec![0.0; out_dim * in_dim];
    let mut db = vec![0.0; out_dim];
    for (xi, dyi) in x.row_iter().zip(dy.row_iter()) {
        for (j, &g) in dyi.iter().enumerate() {
            if g != 0.0 {
                axpy(g, xi, &mut dw[j * in_dim..(j + 1) * in_dim]);
            }
            db[j] += g;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = Matrix::zeros(x.rows, in_dim);
        for (dyi, dxi) in dy.row_iter().zip(dx.data.chunks_exact_mut(in_dim)) {
            for (j, &g) in dyi.iter().enumerate() {
                if g != 0.0 {
                    axpy(g, &weight[j * in_dim..(j + 1) * in_dim], dxi);
                }
            }
        }
        dx
    });
    (dw, db, dx)
}
