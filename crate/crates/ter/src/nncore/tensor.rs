//! Dense row-major f64 tensors.
//!
//! Everything the network touches is one of these: embedding tables,
//! recurrent weights, per-step activations. Shapes are checked eagerly and
//! violations panic — a shape mismatch is a programming error, not a
//! recoverable condition.

use serde::{Deserialize, Serialize};

/// Dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// All-zero tensor with the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    /// Tensor filled with a constant.
    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    /// Build from an explicit shape and backing vector.
    ///
    /// Panics if the element count does not match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        let expect: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            expect,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape: shape.to_vec(), data }
    }

    /// 1x1 tensor holding a single scalar.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of rows; tensors here are always 2-D.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns; tensors here are always 2-D.
    pub fn cols(&self) -> usize {
        self.shape[1]
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

    /// Element at `(r, c)` of a 2-D tensor.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Mutable element at `(r, c)` of a 2-D tensor.
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert_eq!(self.shape.len(), 2);
        &mut self.data[r * self.shape[1] + c]
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Matrix product `self * rhs` for 2-D tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (n, k) = (self.rows(), self.cols());
        let (k2, m) = (rhs.rows(), rhs.cols());
        assert_eq!(k, k2, "matmul inner dims {}x{} vs {}x{}", n, k, k2, m);
        let mut out = vec![0.0; n * m];
        // i-k-j order keeps the inner loop contiguous in both rhs and out.
        for i in 0..n {
            for kk in 0..k {
                let a = self.data[i * k + kk];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[kk * m..(kk + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += a * rrow[j];
                }
            }
        }
        Tensor { shape: vec![n, m], data: out }
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor { shape: vec![m, n], data: out }
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, rhs: &Tensor) -> Tensor {
        assert_eq!(self.shape, rhs.shape, "add shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    /// Elementwise (Hadamard) product; shapes must match exactly.
    pub fn mul(&self, rhs: &Tensor) -> Tensor {
        assert_eq!(self.shape, rhs.shape, "mul shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    /// Scale every element by a constant.
    pub fn scale(&self, s: f64) -> Tensor {
        let data = self.data.iter().map(|a| a * s).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    /// Frobenius (flattened L2) norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}
