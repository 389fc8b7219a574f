use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::scalar::Scalar;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NeuralError> {
        if shape.contains(&0) {
            return Err(NeuralError::ShapeMismatch(format!("zero extent in {shape:?}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(NeuralError::ShapeMismatch(format!(
                "shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Uniform in `(-bound, bound)`.
    pub fn uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
        Self { shape: shape.to_vec(), data }
    }

    /// Glorot/Xavier uniform for an `out x in` matrix.
    pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(&[rows, cols], bound, rng)
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

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[T], out: &mut [T]) {
        let c = self.cols();
        debug_assert_eq!(x.len(), c);
        debug_assert_eq!(out.len(), self.rows());
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(c)) {
            let mut acc = T::zero();
            for (w, v) in row.iter().zip(x) {
                acc += *w * *v;
            }
            *o += acc;
        }
    }

    /// `out += selfᵀ · dy`
    pub fn matvec_t_acc(&self, dy: &[T], out: &mut [T]) {
        let c = self.cols();
        debug_assert_eq!(dy.len(), self.rows());
        for (g, row) in dy.iter().zip(self.data.chunks_exact(c)) {
            if *g == T::zero() {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += *g * *w;
            }
        }
    }

    /// `self += dy · xᵀ`
    pub fn outer_acc(&mut self, dy: &[T], x: &[T]) {
        let c = self.cols();
        for (g, row) in dy.iter().zip(self.data.chunks_exact_mut(c)) {
            if *g == T::zero() {
                continue;
            }
            for (w, v) in row.iter_mut().zip(x) {
                *w += *g * *v;
            }
        }
    }

    /// `self += v`
    pub fn add_acc(&mut self, v: &[T]) {
        for (a, b) in self.data.iter_mut().zip(v) {
            *a += *b;
        }
    }

    pub fn to_stored(&self) -> StoredTensor {
        StoredTensor {
            shape: self.shape.clone(),
            values: self.data.iter().map(|v| v.to_f64_lossless()).collect(),
        }
    }

    pub fn from_stored(s: &StoredTensor) -> Result<Self, NeuralError> {
        Self::from_vec(&s.shape, s.values.iter().map(|&v| T::lit(v)).collect())
    }
}

/// Serialized tensor: shape plus row-major values widened to `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}
