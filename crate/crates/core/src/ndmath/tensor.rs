use serde::{Deserialize, Serialize};

use super::MathError;

/// Dense row-major `f64` tensor of rank 0, 1 or 2.
///
/// Matrices follow the `features × frames` layout used throughout the
/// pipeline: each column is one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, MathError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(MathError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MathError> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MathError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(MathError::ShapeMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            1 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            _ => 1,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, MathError> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64, MathError> {
        self.check_same_shape("dot", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn add(&self, other: &Self) -> Result<Self, MathError> {
        self.check_same_shape("add", other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MathError> {
        self.check_same_shape("sub", other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    /// Unit-norm copy; fails on the zero vector.
    pub fn normalized(&self) -> Result<Self, MathError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(MathError::ZeroNorm { argument: "input" });
        }
        Ok(self.scale(1.0 / n))
    }

    /// Row-major matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self, MathError> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(MathError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (n, k, m) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self, MathError> {
        if self.shape.len() != 2 {
            return Err(MathError::RankMismatch {
                op: "transpose",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Per-row arithmetic mean of a `rows × frames` matrix.
    pub fn mean_over_frames(&self) -> Result<Self, MathError> {
        if self.shape.len() != 2 || self.shape[1] == 0 {
            return Err(MathError::RankMismatch {
                op: "mean_over_frames",
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        let cols = self.shape[1];
        let data = self
            .data
            .chunks(cols)
            .map(|row| row.iter().sum::<f64>() / cols as f64)
            .collect();
        Ok(Self::vector(data))
    }

    /// Stacks matrices with a common column count on top of each other.
    pub fn concat_rows(blocks: &[&Tensor]) -> Result<Self, MathError> {
        let first = blocks.first().ok_or(MathError::EmptyInput("concat_rows"))?;
        if first.shape.len() != 2 {
            return Err(MathError::RankMismatch {
                op: "concat_rows",
                expected: 2,
                shape: first.shape.clone(),
            });
        }
        let cols = first.shape[1];
        let mut rows = 0;
        let mut data = Vec::new();
        for block in blocks {
            if block.shape.len() != 2 || block.shape[1] != cols {
                return Err(MathError::ShapeMismatch {
                    op: "concat_rows",
                    left: first.shape.clone(),
                    right: block.shape.clone(),
                });
            }
            rows += block.shape[0];
            data.extend_from_slice(&block.data);
        }
        Self::matrix(rows, cols, data)
    }

    pub(crate) fn check_same_shape(&self, op: &'static str, other: &Self) -> Result<(), MathError> {
        if self.shape != other.shape {
            return Err(MathError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub(crate) fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Cosine distance `1 − a·b / (‖a‖‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: &Tensor, b: &Tensor) -> Result<f64, MathError> {
    a.check_same_shape("cosine_distance", b)?;
    if a.is_empty() {
        return Err(MathError::EmptyInput("cosine_distance"));
    }
    let na = a.norm();
    if na == 0.0 {
        return Err(MathError::ZeroNorm { argument: "a" });
    }
    let nb = b.norm();
    if nb == 0.0 {
        return Err(MathError::ZeroNorm { argument: "b" });
    }
    let cos = a.dot(b)? / (na * nb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Cosine similarity, the verification score.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<f64, MathError> {
    Ok(1.0 - cosine_distance(a, b)?)
}
