//! Scalar abstraction over the two supported precisions.
//!
//! Training runs in single precision; gradient checking runs in double,
//! where central finite differences are actually trustworthy. A tape is
//! homogeneous: every tensor recorded on it shares one precision.

use core::fmt::{Debug, Display};

use num_traits::Float;

/// Floating-point width of a tape and the tensors on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 32-bit floats, used for training and inference.
    Single,
    /// 64-bit floats, used for gradient checks.
    Double,
}

/// Element type of tensors. Implemented for `f32` and `f64` only.
pub trait Scalar: Float + Debug + Display + Default + 'static {
    const PRECISION: Precision;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}
