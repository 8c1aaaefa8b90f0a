//! Raw array kernels behind the tape ops.
//!
//! Plain loops over row-major buffers, with reduction orders fixed so outputs
//! are bit-reproducible run to run. No explicit SIMD, no threading; the
//! convolution kernels keep their innermost loops on contiguous row slices so
//! the compiler can vectorize them without reassociating sums.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::shape_string;

/// Resolved geometry of a 2-D convolution. `batch == 1` for [C,H,W] inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub batched: bool,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn resolve(
        input_shape: &[usize],
        weight_shape: &[usize],
        bias_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (batch, batched, in_c, in_h, in_w) = match *input_shape {
            [c, h, w] => (1, false, c, h, w),
            [n, c, h, w] => (n, true, c, h, w),
            _ => {
                return Err(Error::shape(format!(
                    "conv2d input must be [C,H,W] or [N,C,H,W], got {}",
                    shape_string(input_shape)
                )))
            }
        };
        let [out_c, w_in_c, k_h, k_w] = *weight_shape else {
            return Err(Error::shape(format!(
                "conv2d weight must be [O,I,kH,kW], got {}",
                shape_string(weight_shape)
            )));
        };
        if bias_shape != [out_c] {
            return Err(Error::shape(format!(
                "conv2d bias must be [{}], got {}",
                out_c,
                shape_string(bias_shape)
            )));
        }
        if w_in_c != in_c {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {in_c}, weight expects {w_in_c}"
            )));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d stride must be positive"));
        }
        let span_h = in_h + 2 * padding;
        let span_w = in_w + 2 * padding;
        if span_h < k_h || span_w < k_w {
            return Err(Error::shape(format!(
                "conv2d kernel {k_h}x{k_w} exceeds padded input {span_h}x{span_w}"
            )));
        }
        let out_h = (span_h - k_h) / stride + 1;
        let out_w = (span_w - k_w) / stride + 1;
        Ok(ConvGeometry {
            batch,
            batched,
            in_c,
            in_h,
            in_w,
            out_c,
            k_h,
            k_w,
            stride,
            padding,
            out_h,
            out_w,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.batch, self.out_c, self.out_h, self.out_w]
        } else {
            vec![self.out_c, self.out_h, self.out_w]
        }
    }
}

/// Output positions `o` with `0 ≤ o·stride + tap − padding < in_len`,
/// as a half-open range clamped to `out_len`. May be empty.
#[inline]
fn tap_span(out_len: usize, in_len: usize, tap: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > tap {
        (padding - tap).div_ceil(stride)
    } else {
        0
    };
    let hi_num = in_len as isize - 1 + padding as isize - tap as isize;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Cross-correlation (no kernel flip), zero padding, bias per output channel.
///
/// Loops are organized tap-outermost so the hot inner loop walks two
/// contiguous rows; per-element accumulation order is bias, then taps in
/// (ic, kh, kw) order, fixed for reproducibility.
pub fn conv2d_forward<S: Scalar>(g: &ConvGeometry, input: &[S], weight: &[S], bias: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); g.batch * g.out_c * g.out_h * g.out_w];
    let in_plane = g.in_h * g.in_w;
    let in_sample = g.in_c * in_plane;
    let out_plane = g.out_h * g.out_w;
    let out_sample = g.out_c * out_plane;
    for n in 0..g.batch {
        let x = &input[n * in_sample..(n + 1) * in_sample];
        let y = &mut out[n * out_sample..(n + 1) * out_sample];
        for oc in 0..g.out_c {
            let y_plane = &mut y[oc * out_plane..(oc + 1) * out_plane];
            y_plane.fill(bias[oc]);
            for ic in 0..g.in_c {
                let x_plane = &x[ic * in_plane..(ic + 1) * in_plane];
                for kh in 0..g.k_h {
                    let (oh_lo, oh_hi) = tap_span(g.out_h, g.in_h, kh, g.stride, g.padding);
                    let w_row = ((oc * g.in_c + ic) * g.k_h + kh) * g.k_w;
                    for kw in 0..g.k_w {
                        let w = weight[w_row + kw];
                        let (ow_lo, ow_hi) = tap_span(g.out_w, g.in_w, kw, g.stride, g.padding);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.padding;
                            let x_row = &x_plane[ih * g.in_w..ih * g.in_w + g.in_w];
                            let y_row = &mut y_plane[oh * g.out_w..oh * g.out_w + g.out_w];
                            if g.stride == 1 {
                                let d = ow_lo + kw - g.padding;
                                let xs = &x_row[d..d + (ow_hi - ow_lo)];
                                for (yv, xv) in y_row[ow_lo..ow_hi].iter_mut().zip(xs) {
                                    *yv = *yv + w * *xv;
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    let iw = ow * g.stride + kw - g.padding;
                                    y_row[ow] = y_row[ow] + w * x_row[iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv2d_backward_input<S: Scalar>(g: &ConvGeometry, weight: &[S], dout: &[S]) -> Vec<S> {
    let mut din = vec![S::zero(); g.batch * g.in_c * g.in_h * g.in_w];
    let in_plane = g.in_h * g.in_w;
    let in_sample = g.in_c * in_plane;
    let out_plane = g.out_h * g.out_w;
    let out_sample = g.out_c * out_plane;
    for n in 0..g.batch {
        let dx = &mut din[n * in_sample..(n + 1) * in_sample];
        let dy = &dout[n * out_sample..(n + 1) * out_sample];
        for oc in 0..g.out_c {
            let dy_plane = &dy[oc * out_plane..(oc + 1) * out_plane];
            for ic in 0..g.in_c {
                let dx_plane = &mut dx[ic * in_plane..(ic + 1) * in_plane];
                for kh in 0..g.k_h {
                    let (oh_lo, oh_hi) = tap_span(g.out_h, g.in_h, kh, g.stride, g.padding);
                    let w_row = ((oc * g.in_c + ic) * g.k_h + kh) * g.k_w;
                    for kw in 0..g.k_w {
                        let w = weight[w_row + kw];
                        let (ow_lo, ow_hi) = tap_span(g.out_w, g.in_w, kw, g.stride, g.padding);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.padding;
                            let dx_row = &mut dx_plane[ih * g.in_w..ih * g.in_w + g.in_w];
                            let dy_row = &dy_plane[oh * g.out_w..oh * g.out_w + g.out_w];
                            if g.stride == 1 {
                                let d = ow_lo + kw - g.padding;
                                let dxs = &mut dx_row[d..d + (ow_hi - ow_lo)];
                                for (dv, gv) in dxs.iter_mut().zip(&dy_row[ow_lo..ow_hi]) {
                                    *dv = *dv + w * *gv;
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    let iw = ow * g.stride + kw - g.padding;
                                    dx_row[iw] = dx_row[iw] + w * dy_row[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

pub fn conv2d_backward_weight<S: Scalar>(g: &ConvGeometry, input: &[S], dout: &[S]) -> Vec<S> {
    let mut dw = vec![S::zero(); g.out_c * g.in_c * g.k_h * g.k_w];
    let in_plane = g.in_h * g.in_w;
    let in_sample = g.in_c * in_plane;
    let out_plane = g.out_h * g.out_w;
    let out_sample = g.out_c * out_plane;
    for n in 0..g.batch {
        let x = &input[n * in_sample..(n + 1) * in_sample];
        let dy = &dout[n * out_sample..(n + 1) * out_sample];
        for oc in 0..g.out_c {
            let dy_plane = &dy[oc * out_plane..(oc + 1) * out_plane];
            for ic in 0..g.in_c {
                let x_plane = &x[ic * in_plane..(ic + 1) * in_plane];
                for kh in 0..g.k_h {
                    let (oh_lo, oh_hi) = tap_span(g.out_h, g.in_h, kh, g.stride, g.padding);
                    let w_row = ((oc * g.in_c + ic) * g.k_h + kh) * g.k_w;
                    for kw in 0..g.k_w {
                        let (ow_lo, ow_hi) = tap_span(g.out_w, g.in_w, kw, g.stride, g.padding);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        let mut acc = S::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.padding;
                            let x_row = &x_plane[ih * g.in_w..ih * g.in_w + g.in_w];
                            let dy_row = &dy_plane[oh * g.out_w..oh * g.out_w + g.out_w];
                            if g.stride == 1 {
                                let d = ow_lo + kw - g.padding;
                                let xs = &x_row[d..d + (ow_hi - ow_lo)];
                                for (gv, xv) in dy_row[ow_lo..ow_hi].iter().zip(xs) {
                                    acc = acc + *gv * *xv;
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    let iw = ow * g.stride + kw - g.padding;
                                    acc = acc + dy_row[ow] * x_row[iw];
                                }
                            }
                        }
                        dw[w_row + kw] = dw[w_row + kw] + acc;
                    }
                }
            }
        }
    }
    dw
}

pub fn conv2d_backward_bias<S: Scalar>(g: &ConvGeometry, dout: &[S]) -> Vec<S> {
    let mut db = vec![S::zero(); g.out_c];
    let out_plane = g.out_h * g.out_w;
    for n in 0..g.batch {
        for oc in 0..g.out_c {
            let base = (n * g.out_c + oc) * out_plane;
            let mut acc = S::zero();
            for i in 0..out_plane {
                acc = acc + dout[base + i];
            }
            db[oc] = db[oc] + acc;
        }
    }
    db
}

/// C[m,n] = A[m,k] · B[k,n].
pub fn matmul_forward<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let a_ik = a[i * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                row[j] = row[j] + a_ik * b_row[j];
            }
        }
    }
    out
}

/// dA = dC · Bᵀ
pub fn matmul_backward_a<S: Scalar>(dout: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut da = vec![S::zero(); m * k];
    for i in 0..m {
        let dc_row = &dout[i * n..(i + 1) * n];
        for kk in 0..k {
            let b_row = &b[kk * n..(kk + 1) * n];
            let mut acc = S::zero();
            for j in 0..n {
                acc = acc + dc_row[j] * b_row[j];
            }
            da[i * k + kk] = acc;
        }
    }
    da
}

/// dB = Aᵀ · dC
pub fn matmul_backward_b<S: Scalar>(a: &[S], dout: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut db = vec![S::zero(); k * n];
    for i in 0..m {
        let dc_row = &dout[i * n..(i + 1) * n];
        for kk in 0..k {
            let a_ik = a[i * k + kk];
            let db_row = &mut db[kk * n..(kk + 1) * n];
            for j in 0..n {
                db_row[j] = db_row[j] + a_ik * dc_row[j];
            }
        }
    }
    db
}

/// [C·r², H, W] → [C, rH, rW] with out[c][h·r+i][w·r+j] = in[c·r²+i·r+j][h][w].
pub fn pixel_shuffle_forward<S: Scalar>(input: &[S], c_out: usize, r: usize, h: usize, w: usize) -> Vec<S> {
    let mut out = vec![S::zero(); c_out * r * h * r * w];
    let (oh, ow) = (h * r, w * r);
    for c in 0..c_out {
        for i in 0..r {
            for j in 0..r {
                let ic = c * r * r + i * r + j;
                for y in 0..h {
                    let src = (ic * h + y) * w;
                    let dst = (c * oh + y * r + i) * ow + j;
                    for x in 0..w {
                        out[dst + x * r] = input[src + x];
                    }
                }
            }
        }
    }
    out
}

/// Inverse of `pixel_shuffle_forward`: [C, rH, rW] → [C·r², H, W].
pub fn pixel_unshuffle<S: Scalar>(input: &[S], c_out: usize, r: usize, h: usize, w: usize) -> Vec<S> {
    let mut out = vec![S::zero(); c_out * r * r * h * w];
    let (oh, ow) = (h * r, w * r);
    for c in 0..c_out {
        for i in 0..r {
            for j in 0..r {
                let ic = c * r * r + i * r + j;
                for y in 0..h {
                    let dst = (ic * h + y) * w;
                    let src = (c * oh + y * r + i) * ow + j;
                    for x in 0..w {
                        out[dst + x] = input[src + x * r];
                    }
                }
            }
        }
    }
    out
}

/// Per-channel spatial mean: [C,H,W] → [C].
pub fn global_avg_pool_forward<S: Scalar>(input: &[S], c: usize, h: usize, w: usize) -> Vec<S> {
    let plane = h * w;
    let inv = S::one() / S::from_usize(plane);
    let mut out = vec![S::zero(); c];
    for ch in 0..c {
        let mut acc = S::zero();
        for i in 0..plane {
            acc = acc + input[ch * plane + i];
        }
        out[ch] = acc * inv;
    }
    out
}

/// Validates and normalizes a reduction axis list. `None` means all axes;
/// an explicit empty list means "reduce nothing" (identity copy).
pub fn normalize_axes(shape: &[usize], axes: Option<&[usize]>) -> Result<Vec<usize>> {
    match axes {
        None => Ok((0..shape.len()).collect()),
        Some(list) => {
            let mut seen = vec![false; shape.len()];
            for &ax in list {
                if ax >= shape.len() {
                    return Err(Error::shape(format!(
                        "axis {ax} out of range for shape {}",
                        shape_string(shape)
                    )));
                }
                if seen[ax] {
                    return Err(Error::shape(format!("axis {ax} listed twice")));
                }
                seen[ax] = true;
            }
            let mut sorted: Vec<usize> = list.to_vec();
            sorted.sort_unstable();
            Ok(sorted)
        }
    }
}

/// Shape left after removing `axes`; a full reduction collapses to `[1]`.
pub fn reduced_shape(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let kept: Vec<usize> = (0..shape.len()).filter(|d| !axes.contains(d)).map(|d| shape[d]).collect();
    if kept.is_empty() && !shape.is_empty() && !axes.is_empty() {
        vec![1]
    } else if kept.is_empty() {
        shape.to_vec()
    } else {
        kept
    }
}

/// Number of input elements folded into each output cell.
pub fn reduced_count(shape: &[usize], axes: &[usize]) -> usize {
    axes.iter().map(|&d| shape[d]).product()
}

/// Sum over `axes` (already normalized). Row-major accumulation order.
pub fn reduce_sum<S: Scalar>(input: &[S], shape: &[usize], axes: &[usize]) -> Vec<S> {
    if axes.is_empty() {
        return input.to_vec();
    }
    let out_shape = reduced_shape(shape, axes);
    let out_len: usize = out_shape.iter().product();
    let mut out = vec![S::zero(); out_len];
    for (flat, &v) in input.iter().enumerate() {
        let o = reduce_output_index(flat, shape, axes);
        out[o] = out[o] + v;
    }
    out
}

/// Flat output index a given flat input index folds into.
fn reduce_output_index(flat: usize, shape: &[usize], axes: &[usize]) -> usize {
    let mut rem = flat;
    let mut coords = vec![0usize; shape.len()];
    for d in (0..shape.len()).rev() {
        coords[d] = rem % shape[d];
        rem /= shape[d];
    }
    let mut out = 0usize;
    for d in 0..shape.len() {
        if !axes.contains(&d) {
            out = out * shape[d] + coords[d];
        }
    }
    out
}

/// Scatter of the output gradient back over the reduced axes; `scale` is 1
/// for sum and 1/count for mean.
pub fn reduce_backward<S: Scalar>(dout: &[S], shape: &[usize], axes: &[usize], scale: S) -> Vec<S> {
    if axes.is_empty() {
        return dout.iter().map(|&g| g * scale).collect();
    }
    let len: usize = shape.iter().product();
    let mut din = vec![S::zero(); len];
    for (flat, slot) in din.iter_mut().enumerate() {
        *slot = dout[reduce_output_index(flat, shape, axes)] * scale;
    }
    din
}
