//! Trainable layers: 2-D convolution and dense, plus weight initialization.
//!
//! Layers are generic over their parameter storage `P`. At rest parameters
//! are `Tensor<S>`; at the start of a step they are lifted onto a tape with
//! [`Conv2d::map`]/[`Dense::map`] into `Var<'t, S>` views, the forward pass
//! runs on those, and gradients flow back to the lifted leaves. The map
//! visits fields in a fixed order (weight, then bias), which checkpoint
//! naming and the optimizer both rely on.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// He-normal draw: zero-mean Gaussian with σ = √(2 / fan_in).
///
/// Sampling happens in `f64` so single- and double-precision models draw
/// the same sequence from the same stream, up to rounding.
pub fn he_normal<S: Scalar>(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<S> {
    let std = Float::sqrt(2.0 / fan_in as f64);
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let n = shape.iter().product();
    let data: Vec<S> = (0..n).map(|_| S::from_f64(normal.sample(rng))).collect();
    Tensor::new(shape, data).expect("shape and data agree").with_requires_grad()
}

/// Zero-filled parameter tensor with gradient tracking on.
pub fn zeros_param<S: Scalar>(shape: Vec<usize>) -> Tensor<S> {
    Tensor::zeros(shape).with_requires_grad()
}

/// 2-D convolution layer: weight `[O,I,kH,kW]`, bias `[O]`.
#[derive(Debug, Clone)]
pub struct Conv2d<P> {
    pub weight: P,
    pub bias: P,
    pub stride: usize,
    pub padding: usize,
}

impl<P> Conv2d<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Conv2d<Q> {
        Conv2d { weight: f(&self.weight), bias: f(&self.bias), stride: self.stride, padding: self.padding }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        f(&self.weight);
        f(&self.bias);
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut P)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    pub fn for_each_named(&self, prefix: &str, f: &mut impl FnMut(String, &P)) {
        f(alloc::format!("{prefix}.weight"), &self.weight);
        f(alloc::format!("{prefix}.bias"), &self.bias);
    }

    pub fn for_each_named_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut P)) {
        f(alloc::format!("{prefix}.weight"), &mut self.weight);
        f(alloc::format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<S: Scalar> Conv2d<Tensor<S>> {
    /// He-normal weight over fan_in = I·kH·kW, zero bias.
    pub fn init(rng: &mut Rng, in_c: usize, out_c: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let fan_in = in_c * kernel * kernel;
        Conv2d {
            weight: he_normal(rng, alloc::vec![out_c, in_c, kernel, kernel], fan_in),
            bias: zeros_param(alloc::vec![out_c]),
            stride,
            padding,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

impl<'t, S: Scalar> Conv2d<Var<'t, S>> {
    pub fn forward(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.conv2d(self.weight, self.bias, self.stride, self.padding)
    }
}

/// Fully connected layer: weight `[out,in]`, bias `[out]`, 1-D activations.
#[derive(Debug, Clone)]
pub struct Dense<P> {
    pub weight: P,
    pub bias: P,
}

impl<P> Dense<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Dense<Q> {
        Dense { weight: f(&self.weight), bias: f(&self.bias) }
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        f(&self.weight);
        f(&self.bias);
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut P)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }

    pub fn for_each_named(&self, prefix: &str, f: &mut impl FnMut(String, &P)) {
        f(alloc::format!("{prefix}.weight"), &self.weight);
        f(alloc::format!("{prefix}.bias"), &self.bias);
    }

    pub fn for_each_named_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut P)) {
        f(alloc::format!("{prefix}.weight"), &mut self.weight);
        f(alloc::format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<S: Scalar> Dense<Tensor<S>> {
    /// He-normal weight over fan_in = in_features, zero bias.
    pub fn init(rng: &mut Rng, in_features: usize, out_features: usize) -> Self {
        Dense {
            weight: he_normal(rng, alloc::vec![out_features, in_features], in_features),
            bias: zeros_param(alloc::vec![out_features]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

impl<'t, S: Scalar> Dense<Var<'t, S>> {
    pub fn forward(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.dense(self.weight, self.bias)
    }
}
