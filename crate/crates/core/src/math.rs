//! Dense row-major matrices, vectors, and the scalar kernels the network
//! is built from. Everything is `f64`.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense row-major matrix of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix shape {rows}x{cols} has a zero extent"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix extents must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::shape(
                "Matrix::from_rows",
                format!("{cols} columns"),
                format!("row of {}", bad.len()),
            ));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Copy keeping only the listed rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Matrix {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.rows {
            list.entry(&self.row(i));
        }
        list.finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

/// A dense vector of finite `f64` values.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector data"));
        }
        Ok(Vector(data))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Vector(data)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(Error::shape(
            "matvec",
            format!("matrix {}x{}", m.rows, m.cols),
            format!("vector of {}", v.len()),
        ));
    }
    let mut out = vec![0.0; m.rows];
    matvec_into(m, v, &mut out);
    Ok(Vector(out))
}

/// `out = m * v` without shape checks beyond debug assertions.
#[inline]
pub(crate) fn matvec_into(m: &Matrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, v.len());
    debug_assert_eq!(m.rows, out.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols)) {
        *o = dot(row, v);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent lanes so the loop vectorises; summation order is fixed.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Element-wise logistic function.
pub fn sigmoid(v: &[f64]) -> Vector {
    Vector(v.iter().copied().map(sigmoid_scalar).collect())
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    Vector(p)
}

/// Cross-entropy of `softmax(logits)` against a class index, with its
/// gradient with respect to the logits (`softmax - onehot`).
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vector)> {
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
    let log_sum = sum.ln() + max;
    let loss = log_sum - logits[target];
    let mut grad: Vec<f64> = logits.iter().map(|&x| (x - log_sum).exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, Vector(grad)))
}

/// Euclidean norm of every column.
pub fn column_norms(m: &Matrix) -> Vector {
    let mut acc = vec![0.0; m.cols];
    for row in m.data.chunks_exact(m.cols) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x * x;
        }
    }
    acc.iter_mut().for_each(|a| *a = a.sqrt());
    Vector(acc)
}

/// Euclidean norm of every row. Summed in index order, like `column_norms`,
/// so a transposed matrix gives bit-identical norms.
pub fn row_norms(m: &Matrix) -> Vector {
    Vector(
        m.data
            .chunks_exact(m.cols)
            .map(|r| r.iter().fold(0.0, |a, x| a + x * x).sqrt())
            .collect(),
    )
}
