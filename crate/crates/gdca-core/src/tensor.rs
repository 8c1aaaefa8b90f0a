//! Dense n-dimensional tensor with an optional gradient slot.
//!
//! Data is a flat row-major buffer. Shapes are immutable after construction;
//! `reshaped` returns a new tensor over a copy of the data. Tensors recorded
//! on a tape are never mutated in place — the tape copies leaf values when
//! they are lifted, which keeps backward rules sound without aliasing
//! analysis.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

/// Number of elements a shape addresses.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn shape_string(shape: &[usize]) -> String {
    let mut s = String::from("[");
    for (i, d) in shape.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{d}"));
    }
    s.push(']');
    s
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor from a shape and a flat row-major buffer.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "zero dimension in shape {}",
                shape_string(&shape)
            )));
        }
        if numel(&shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {} addresses {} elements but data has {}",
                shape_string(&shape),
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor { shape, data: vec![S::zero(); n], requires_grad: false, grad: None }
    }

    pub fn full(shape: Vec<usize>, value: S) -> Self {
        let n = numel(&shape);
        Tensor { shape, data: vec![value; n], requires_grad: false, grad: None }
    }

    /// Scalar tensor of shape `[1]`.
    pub fn scalar(value: S) -> Self {
        Tensor::full(vec![1], value)
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        let n = data.len();
        Tensor { shape: vec![n], data, requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Replaces the gradient slot. Length must match the data buffer.
    pub fn set_grad(&mut self, grad: Vec<S>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::contract(format!(
                "gradient length {} does not match tensor of {} elements",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    /// Adds into the gradient slot, creating it as zeros first if absent.
    pub fn accumulate_grad(&mut self, grad: &[S]) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::contract(format!(
                "gradient length {} does not match tensor of {} elements",
                grad.len(),
                self.data.len()
            )));
        }
        let slot = self.grad.get_or_insert_with(|| vec![S::zero(); grad.len()]);
        for (g, &d) in slot.iter_mut().zip(grad) {
            *g = *g + d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// New tensor over a copy of the data with a different shape of the same
    /// total length. Gradient and requires_grad are not carried over.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        if numel(&shape) != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} elements into {}",
                self.data.len(),
                shape_string(&shape)
            )));
        }
        Tensor::new(shape, self.data.clone())
    }

    /// Elementwise copy converted to another precision.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect();
        let mut t = Tensor { shape: self.shape.clone(), data, requires_grad: self.requires_grad, grad: None };
        if let Some(g) = &self.grad {
            t.grad = Some(g.iter().map(|&v| T::from_f64(v.to_f64())).collect());
        }
        t
    }

    /// Mutable access for construction-time fills (init, tests). Tensors
    /// already lifted onto a tape are unaffected: the tape owns a copy.
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }
}
