//! Core engine for GDCA single-image super-resolution.
//!
//! Everything in this crate is pure computation over flat buffers: a dense
//! tensor type with reverse-mode automatic differentiation, the neural
//! building blocks (convolution, dense, pixel shuffle, attention plumbing),
//! the GDCA generator and dual-discriminator models, training losses and the
//! Adam optimizer, plus the image data pipeline (bicubic resampling, patch
//! sampling, augmentation) and the RMSE/PSNR metrics.
//!
//! File formats, process I/O and the command-line interface live in the
//! companion `gdca-cli` crate; this crate is `no_std` (with `alloc`).

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod gradcheck;
pub mod image;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod patch;
pub mod resize;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
