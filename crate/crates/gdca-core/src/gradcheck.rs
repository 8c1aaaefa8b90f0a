//! Numerical gradient checking via central finite differences.
//!
//! The independent reference for every backward rule in this crate:
//! ∂f/∂xᵢ ≈ (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h, evaluated by rebuilding the
//! forward pass from scratch for each probe. Meant to run in `f64`, where
//! the truncation error of the central stencil (O(h²)) and the roundoff
//! error (O(ε/h)) both sit far below the comparison tolerances.

use alloc::vec::Vec;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numeric gradient of `f` with respect to every entry of `x`.
pub fn finite_diff_grad<S, F>(x: &Tensor<S>, h: S, mut f: F) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&Tensor<S>) -> Result<S>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    finite_diff_grad_at(x, &all, h, &mut f)
}

/// Numeric gradient restricted to the given flat indices, in their order.
///
/// Full probing costs two forward passes per entry; for expensive graphs
/// the caller samples a subset of coordinates instead.
pub fn finite_diff_grad_at<S, F>(x: &Tensor<S>, indices: &[usize], h: S, mut f: F) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&Tensor<S>) -> Result<S>,
{
    let mut out = Vec::with_capacity(indices.len());
    let two_h = h + h;
    for &i in indices {
        let mut plus = x.clone();
        plus.data_mut()[i] = plus.data()[i] + h;
        let fp = f(&plus)?;
        let mut minus = x.clone();
        minus.data_mut()[i] = minus.data()[i] - h;
        let fm = f(&minus)?;
        out.push((fp - fm) / two_h);
    }
    Ok(out)
}

/// First index where |a−b| exceeds atol + rtol·|b|, with the two values.
pub fn first_mismatch<S: Scalar>(
    analytic: &[S],
    numeric: &[S],
    rtol: S,
    atol: S,
) -> Option<(usize, S, S)> {
    analytic
        .iter()
        .zip(numeric.iter())
        .position(|(&a, &n)| (a - n).abs() > atol + rtol * n.abs())
        .map(|i| (i, analytic[i], numeric[i]))
}

/// Panics with a readable report unless every pair agrees within tolerance.
/// Test-suite convenience.
pub fn assert_grads_close<S: Scalar>(analytic: &[S], numeric: &[S], rtol: S, atol: S) {
    assert_eq!(
        analytic.len(),
        numeric.len(),
        "gradient length mismatch: {} vs {}",
        analytic.len(),
        numeric.len()
    );
    if let Some((i, a, n)) = first_mismatch(analytic, numeric, rtol, atol) {
        panic!("gradient mismatch at index {i}: analytic {a} vs numeric {n}");
    }
}
