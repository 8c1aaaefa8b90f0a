//! Reconstruction quality metrics: RMSE on 8-bit quantized values and its
//! PSNR companion.
//!
//! Both images are quantized to the 8-bit grid first and a border is
//! cropped on all sides (default 4 pixels, the upscale factor) so edge
//! effects of the resampler don't dominate, matching common SISR practice.
//! RMSE is reported in 0–255 units.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::image::Image;

/// Border width (pixels removed on each side) used when none is given.
pub const DEFAULT_BORDER_CROP: usize = 4;

/// Root mean square error over the cropped interior, in 8-bit units.
pub fn rmse(a: &Image, b: &Image, border_crop: usize) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::shape(alloc::format!(
            "image dimensions differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    if a.height() <= 2 * border_crop || a.width() <= 2 * border_crop {
        return Err(Error::size(alloc::format!(
            "{}x{} image too small for border crop {border_crop}",
            a.height(),
            a.width()
        )));
    }
    let qa = a.to_rgb8();
    let qb = b.to_rgb8();
    let w = a.width();
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for y in border_crop..a.height() - border_crop {
        for x in border_crop..w - border_crop {
            let i = (y * w + x) * 3;
            for c in 0..3 {
                let d = qa[i + c] as f64 - qb[i + c] as f64;
                acc += d * d;
                count += 1;
            }
        }
    }
    Ok((acc / count as f64).sqrt())
}

/// Peak signal-to-noise ratio against the 255 ceiling; +∞ when RMSE is 0.
pub fn psnr(a: &Image, b: &Image, border_crop: usize) -> Result<f64> {
    Ok(psnr_from_rmse(rmse(a, b, border_crop)?))
}

/// 20·log10(255 / rmse); identical images map to +∞.
pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse == 0.0 {
        f64::infinity()
    } else {
        20.0 * (255.0 / rmse).log10()
    }
}
