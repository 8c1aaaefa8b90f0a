//! Separable bicubic resampling with the Catmull-Rom kernel (a = −0.5).
//!
//! Sampling is center-aligned: output pixel i reads source coordinate
//! (i + 0.5)·scale − 0.5, the convention under which down- and upsampling
//! of the same grid stay registered. Out-of-range taps clamp to the edge
//! pixel, and the result is clamped to [0,1].

use alloc::vec;
use alloc::vec::Vec;

use crate::image::Image;

/// Catmull-Rom cubic: the a = −0.5 member of the Keys kernel family.
fn kernel(t: f64) -> f64 {
    let t = num_traits::Float::abs(t);
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Four source taps (clamped) and weights for every output position along
/// one axis.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = num_traits::Float::floor(src) as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0f64; 4];
            for k in 0..4 {
                let tap = base - 1 + k as isize;
                idx[k] = tap.clamp(0, in_len as isize - 1) as usize;
                w[k] = kernel(src - tap as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Resizes to (out_h, out_w). Both output dimensions must be ≥ 1.
pub fn bicubic_resize(img: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "output dimensions must be positive");
    let (in_h, in_w) = (img.height(), img.width());
    let src = img.pixels();

    // horizontal pass: (in_h, in_w) → (in_h, out_w)
    let cols = axis_taps(in_w, out_w);
    let mut mid = vec![0.0f64; in_h * out_w * 3];
    for y in 0..in_h {
        let row = y * in_w * 3;
        for (x, (idx, w)) in cols.iter().enumerate() {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += w[k] * src[row + idx[k] * 3 + c];
                }
                mid[(y * out_w + x) * 3 + c] = acc;
            }
        }
    }

    // vertical pass: (in_h, out_w) → (out_h, out_w)
    let rows = axis_taps(in_h, out_h);
    let mut out = vec![0.0f64; out_h * out_w * 3];
    for (y, (idx, w)) in rows.iter().enumerate() {
        for x in 0..out_w {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += w[k] * mid[(idx[k] * out_w + x) * 3 + c];
                }
                out[(y * out_w + x) * 3 + c] = acc.clamp(0.0, 1.0);
            }
        }
    }

    Image::new(out_h, out_w, out).expect("resampled values are clamped")
}
