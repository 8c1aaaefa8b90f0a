//! Training pair extraction: aligned random crops, bicubic LR synthesis,
//! and dihedral augmentation.
//!
//! All randomness comes from a caller-supplied ChaCha stream, and
//! [`assemble_batch`] derives that stream purely from (master seed, step),
//! so the batch at step n is a function of the dataset and the seed alone —
//! the property that makes interrupted and resumed runs bit-identical.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::resize::bicubic_resize;
use crate::rng::{rng_for, stream, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Upscale factor tying LR and HR patch sizes together.
pub const SCALE: usize = 4;

/// One aligned (LR, HR) training example.
#[derive(Debug, Clone)]
pub struct PatchPair<S: Scalar> {
    /// [3, p, p]
    pub lr: Tensor<S>,
    /// [3, 4p, 4p]
    pub hr: Tensor<S>,
    pub source_id: String,
    /// Crop origin in HR pixel coordinates; both components are multiples
    /// of the scale factor.
    pub offset: (usize, usize),
}

/// Crops a random 4p×4p HR window (offset aligned to multiples of 4) and
/// synthesizes its LR counterpart by bicubic ×4 downscaling.
pub fn sample_patch_pair<S: Scalar>(
    img: &Image,
    source_id: &str,
    p: usize,
    rng: &mut Rng,
) -> Result<PatchPair<S>> {
    if p < 8 {
        return Err(Error::size(alloc::format!("patch size {p} below minimum 8")));
    }
    let hr_size = SCALE * p;
    if img.height() < hr_size || img.width() < hr_size {
        return Err(Error::size(alloc::format!(
            "image {}x{} smaller than HR patch {hr_size}x{hr_size}",
            img.height(),
            img.width()
        )));
    }
    let max_row = (img.height() - hr_size) / SCALE;
    let max_col = (img.width() - hr_size) / SCALE;
    let row = SCALE * rng.gen_range(0..=max_row);
    let col = SCALE * rng.gen_range(0..=max_col);
    let hr = img.crop(row, col, hr_size, hr_size)?;
    let lr = bicubic_resize(&hr, p, p);
    Ok(PatchPair {
        lr: lr.to_tensor(),
        hr: hr.to_tensor(),
        source_id: String::from(source_id),
        offset: (row, col),
    })
}

/// Applies one of the eight dihedral transforms (rotation k·90° clockwise,
/// optionally preceded by a horizontal flip) to a [3,H,W] tensor.
pub fn dihedral<S: Scalar>(t: &Tensor<S>, k: usize) -> Tensor<S> {
    assert!(k < 8, "dihedral element index out of range");
    let [c, h, w] = t.shape()[..] else {
        panic!("dihedral expects a [C,H,W] tensor");
    };
    let rot = k % 4;
    let flip = k >= 4;
    let (oh, ow) = if rot % 2 == 0 { (h, w) } else { (w, h) };
    let mut out = alloc::vec![S::zero(); c * oh * ow];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let sx = if flip { w - 1 - x } else { x };
                let (ty, tx) = match rot {
                    0 => (y, x),
                    1 => (x, h - 1 - y),          // 90° clockwise
                    2 => (h - 1 - y, w - 1 - x),  // 180°
                    _ => (w - 1 - x, y),          // 270° clockwise
                };
                out[(ch * oh + ty) * ow + tx] = t.data()[(ch * h + y) * w + sx];
            }
        }
    }
    Tensor::new(alloc::vec![c, oh, ow], out).expect("dihedral preserves element count")
}

/// Draws one of the 8 dihedral transforms uniformly and applies it to both
/// sides of the pair.
pub fn augment<S: Scalar>(pair: &PatchPair<S>, rng: &mut Rng) -> PatchPair<S> {
    let k = rng.gen_range(0..8);
    PatchPair {
        lr: dihedral(&pair.lr, k),
        hr: dihedral(&pair.hr, k),
        source_id: pair.source_id.clone(),
        offset: pair.offset,
    }
}

/// Deterministic batch for a given training step: `batch_size` augmented
/// patch pairs drawn from images picked uniformly by index.
pub fn assemble_batch<S: Scalar>(
    images: &[(String, Image)],
    p: usize,
    master_seed: u64,
    step: u64,
    batch_size: usize,
) -> Result<Vec<PatchPair<S>>> {
    if images.is_empty() {
        return Err(Error::size("no images to sample from"));
    }
    let mut rng = rng_for(master_seed, stream::BATCH, step);
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (id, img) = &images[rng.gen_range(0..images.len())];
        let pair = sample_patch_pair(img, id, p, &mut rng)?;
        batch.push(augment(&pair, &mut rng));
    }
    Ok(batch)
}
