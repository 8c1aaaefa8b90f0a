//! In-memory RGB image: H×W×3 interleaved `f64` samples in [0,1].
//!
//! Images hold full `f64` precision so resampling error stays far below the
//! 8-bit grid; quantization to bytes happens only at the PPM boundary and
//! inside the metrics, always as round(v·255) with v = b/255 coming back.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Wraps interleaved RGB samples; dimensions must be positive, the
    /// buffer exactly 3·H·W long, and every value inside [0,1].
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::size("image dimensions must be positive"));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::size(format!(
                "pixel buffer holds {} values, {}x{} RGB needs {}",
                pixels.len(),
                height,
                width,
                height * width * 3
            )));
        }
        if let Some(bad) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::size(format!("sample {bad} outside [0,1]")));
        }
        Ok(Image { height, width, pixels })
    }

    pub fn constant(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            pixels.extend_from_slice(&rgb);
        }
        Image::new(height, width, pixels)
    }

    /// Decodes 8-bit interleaved RGB: v = b/255.
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(Error::size(format!(
                "{} bytes for {}x{} RGB, expected {}",
                bytes.len(),
                height,
                width,
                height * width * 3
            )));
        }
        let pixels = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Image::new(height, width, pixels)
    }

    /// Quantizes to 8-bit interleaved RGB: round(v·255), half away from zero.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// RGB triple at (row, col).
    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::size(format!(
                "crop {height}x{width}+{top}+{left} exceeds image {}x{}",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            let row = ((top + y) * self.width + left) * 3;
            pixels.extend_from_slice(&self.pixels[row..row + width * 3]);
        }
        Image::new(height, width, pixels)
    }

    /// Planar [3,H,W] tensor view of the image.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let plane = self.height * self.width;
        let mut data = vec![S::zero(); 3 * plane];
        for i in 0..plane {
            for c in 0..3 {
                data[c * plane + i] = S::from_f64(self.pixels[i * 3 + c]);
            }
        }
        Tensor::new(vec![3, self.height, self.width], data).expect("buffer sized for shape")
    }

    /// Image from a planar [3,H,W] tensor, clamping samples into [0,1].
    pub fn from_tensor<S: Scalar>(t: &Tensor<S>) -> Result<Image> {
        let [c, h, w] = t.shape()[..] else {
            return Err(Error::size("image tensor must be [3,H,W]"));
        };
        if c != 3 {
            return Err(Error::size("image tensor must have 3 channels"));
        }
        let plane = h * w;
        let mut pixels = vec![0.0; 3 * plane];
        for i in 0..plane {
            for ch in 0..3 {
                let v = t.data()[ch * plane + i].to_f64();
                pixels[i * 3 + ch] = v.clamp(0.0, 1.0);
            }
        }
        Image::new(h, w, pixels)
    }
}

/// round(v·255) clamped to the byte range, half rounding away from zero.
pub fn quantize(v: f64) -> u8 {
    let scaled = num_traits::Float::round(v * 255.0);
    scaled.clamp(0.0, 255.0) as u8
}
