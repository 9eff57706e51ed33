//! Dense row-major f64 tensors.
//!
//! Sequence lengths stay below 64 at desk scale, so there is no sparsity,
//! no batching, and no precision knob: everything is contiguous f64.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite tensor value".into()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `r` of a 2-d tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    fn same_shape(&self, o: &Tensor, op: &str) -> Result<()> {
        if self.shape != o.shape {
            return Err(Error::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape, o.shape
            )));
        }
        Ok(())
    }

    fn zip(&self, o: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(o, op)?;
        let data = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn add(&self, o: &Tensor) -> Result<Tensor> {
        self.zip(o, "add", |a, b| a + b)
    }

    pub fn sub(&self, o: &Tensor) -> Result<Tensor> {
        self.zip(o, "sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, o: &Tensor) -> Result<Tensor> {
        self.zip(o, "mul", |a, b| a * b)
    }

    /// Elementwise maximum.
    pub fn max(&self, o: &Tensor) -> Result<Tensor> {
        self.zip(o, "max", f64::max)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| v.max(0.0))
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(super::num::sigmoid_f64)
    }

    /// Elementwise e^x. Callers keep arguments in stable form (non-positive
    /// or max-subtracted); raw inputs above ~709 overflow f64.
    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn log1p(&self) -> Tensor {
        self.map(f64::ln_1p)
    }

    pub fn abs(&self) -> Tensor {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn dot(&self, o: &Tensor) -> Result<f64> {
        self.same_shape(o, "dot")?;
        Ok(self.data.iter().zip(&o.data).map(|(a, b)| a * b).sum())
    }

    /// Dense matrix–vector product; `self` must be `r×c`, `v` length `c`.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || v.shape.len() != 1 || self.shape[1] != v.shape[0] {
            return Err(Error::ShapeMismatch(format!(
                "matvec: {:?} · {:?}",
                self.shape, v.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * c..(i + 1) * c];
            *o = row.iter().zip(&v.data).map(|(a, b)| a * b).sum();
        }
        Ok(Tensor {
            shape: vec![r],
            data: out,
        })
    }
}
