//! Dense row-major `f64` arrays and the small set of linear-algebra kernels
//! the rest of the crate builds on.
//!
//! All reductions and matrix products run in a fixed left-to-right order so
//! that repeated runs are bit-identical; nothing here is tuned beyond
//! cache-friendly loop ordering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("inner dimensions do not match: {left:?} x {right:?}")]
    InnerDim { left: Vec<usize>, right: Vec<usize> },
    #[error("expected a matrix, got shape {shape:?}")]
    NotMatrix { shape: Vec<usize> },
    #[error("{op} requires a non-empty tensor")]
    Empty { op: &'static str },
    #[error("shape extents must be positive: {shape:?}")]
    ZeroExtent { shape: Vec<usize> },
}

/// Dense row-major array of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::ZeroExtent { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        assert!(shape.iter().all(|&e| e > 0), "zero extent in {shape:?}");
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::from_vec(vec![rows, cols], data)
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    fn as_matrix(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::NotMatrix {
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// `self[m x k] * rhs[k x n]`, accumulating over `k` in index order.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        let (m, k) = self.as_matrix()?;
        let (k2, n) = rhs.as_matrix()?;
        if k != k2 {
            return Err(TensorError::InnerDim {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (kk, &aik) in a_row.iter().enumerate() {
                let b_row = &rhs.data[kk * n..(kk + 1) * n];
                for (o, &bkj) in o_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        }
        Tensor::from_vec(vec![m, n], out)
    }

    /// `self[m x k] * rhs^T` where `rhs` is `[n x k]`.
    ///
    /// Both operands are walked along their rows, which keeps the dense-layer
    /// forward pass cache friendly without materializing a transpose.
    pub fn matmul_nt(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        let (m, k) = self.as_matrix()?;
        let (n, k2) = rhs.as_matrix()?;
        if k != k2 {
            return Err(TensorError::InnerDim {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in o_row.iter_mut().enumerate() {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                *o = acc;
            }
        }
        Tensor::from_vec(vec![m, n], out)
    }

    /// `self^T * rhs` where `self` is `[k x m]` and `rhs` is `[k x n]`.
    ///
    /// Used for weight gradients (`delta^T * input`); accumulates over the
    /// shared `k` axis in index order.
    pub fn matmul_tn(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        let (k, m) = self.as_matrix()?;
        let (k2, n) = rhs.as_matrix()?;
        if k != k2 {
            return Err(TensorError::InnerDim {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for kk in 0..k {
            let a_row = &self.data[kk * m..(kk + 1) * m];
            let b_row = &rhs.data[kk * n..(kk + 1) * n];
            for (i, &aki) in a_row.iter().enumerate() {
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &bkj) in o_row.iter_mut().zip(b_row) {
                    *o += aki * bkj;
                }
            }
        }
        Tensor::from_vec(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        let (r, c) = self.as_matrix()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::from_vec(vec![c, r], out)
    }

    /// Element-wise map.
    pub fn ew_map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Element-wise combination of two equally shaped tensors.
    pub fn ew_zip(&self, rhs: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        if self.shape != rhs.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Sum of all entries, accumulated in index order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> Result<f64, TensorError> {
        if self.data.is_empty() {
            return Err(TensorError::Empty { op: "mean" });
        }
        Ok(self.sum() / self.data.len() as f64)
    }

    pub fn abs_mean(&self) -> Result<f64, TensorError> {
        if self.data.is_empty() {
            return Err(TensorError::Empty { op: "abs_mean" });
        }
        let total: f64 = self.data.iter().map(|x| x.abs()).sum();
        Ok(total / self.data.len() as f64)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&x| x != 0.0).count()
    }
}

/// Mean absolute value of a raw slice, index order.
pub fn abs_mean_slice(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64
}
