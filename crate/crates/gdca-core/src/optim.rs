//! Adam with bias correction.
//!
//! The optimizer keeps one (m, v) moment pair per parameter slot, indexed
//! by position in the model's fixed traversal order. Slots are created on
//! first touch, so construction needs no knowledge of the model; resuming
//! restores the moments and step counter from a checkpoint.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<S: Scalar> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    t: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Self::with_hyper(lr, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr: S::from_f64(lr),
            beta1: S::from_f64(beta1),
            beta2: S::from_f64(beta2),
            eps: S::from_f64(eps),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn slot_count(&self) -> usize {
        self.m.len()
    }

    pub fn moment1(&self, slot: usize) -> &[S] {
        &self.m[slot]
    }

    pub fn moment2(&self, slot: usize) -> &[S] {
        &self.v[slot]
    }

    /// Overwrites one slot's moments, creating intermediate empty slots if
    /// needed; used when resuming from a checkpoint.
    pub fn restore_slot(&mut self, slot: usize, m: Vec<S>, v: Vec<S>) -> Result<()> {
        if m.len() != v.len() {
            return Err(Error::contract("adam moment lengths disagree"));
        }
        while self.m.len() <= slot {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        self.m[slot] = m;
        self.v[slot] = v;
        Ok(())
    }

    pub fn set_step_count(&mut self, t: u64) {
        self.t = t;
    }

    /// Advances the shared step counter. Call once per optimizer step,
    /// before the per-parameter updates of that step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Applies one Adam update to a single parameter slot:
    /// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², θ ← θ − lr·m̂/(√v̂+ε).
    pub fn update(&mut self, slot: usize, param: &mut [S], grad: &[S]) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::contract("parameter and gradient lengths disagree"));
        }
        while self.m.len() <= slot {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[slot].is_empty() {
            self.m[slot] = vec![S::zero(); param.len()];
            self.v[slot] = vec![S::zero(); param.len()];
        }
        if self.m[slot].len() != param.len() {
            return Err(Error::contract("adam slot shape does not match parameter"));
        }
        let one = S::one();
        let bias1 = one - self.beta1.powi(self.t as i32);
        let bias2 = one - self.beta2.powi(self.t as i32);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (one - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (one - self.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            param[i] = param[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_with_unit_gradient_moves_lr() {
        // m̂ = v̂ = 1 after one step, so Δθ = −lr/(1+ε) ≈ −lr.
        let mut opt: Adam<f64> = Adam::new(1e-3);
        let mut theta = [0.5, -2.0, 7.0];
        opt.begin_step();
        opt.update(0, &mut theta, &[1.0, 1.0, 1.0]).unwrap();
        for (i, &expected) in [0.5, -2.0, 7.0].iter().enumerate() {
            let delta = theta[i] - expected;
            assert!((delta + 1e-3).abs() < 1e-3 * 1e-6, "delta {delta}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params_fixed() {
        let mut opt: Adam<f64> = Adam::new(1e-2);
        let mut theta = [1.0, 2.0];
        opt.begin_step();
        opt.update(0, &mut theta, &[0.0, 0.0]).unwrap();
        assert_eq!(theta, [1.0, 2.0]);
    }

    #[test]
    fn matches_reference_trace_on_quadratic() {
        // Ten steps minimizing f(θ) = θ² from θ₀ = 1, compared against an
        // independently written reference loop.
        let lr = 0.1;
        let (b1, b2, eps) = (DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS);

        let mut reference = 1.0_f64;
        let (mut rm, mut rv) = (0.0_f64, 0.0_f64);
        let mut trace = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * reference;
            rm = b1 * rm + (1.0 - b1) * g;
            rv = b2 * rv + (1.0 - b2) * g * g;
            let mh = rm / (1.0 - b1.powi(t));
            let vh = rv / (1.0 - b2.powi(t));
            reference -= lr * mh / (vh.sqrt() + eps);
            trace.push(reference);
        }

        let mut opt: Adam<f64> = Adam::new(lr);
        let mut theta = [1.0_f64];
        for step in 0..10 {
            let g = [2.0 * theta[0]];
            opt.begin_step();
            opt.update(0, &mut theta, &g).unwrap();
            assert!((theta[0] - trace[step]).abs() < 1e-9, "step {step}");
        }
        assert_eq!(opt.step_count(), 10);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut opt: Adam<f64> = Adam::new(1e-3);
        let mut theta = [1.0, 2.0];
        opt.begin_step();
        assert!(opt.update(0, &mut theta, &[1.0]).is_err());
        opt.update(0, &mut theta, &[1.0, 1.0]).unwrap();
        // slot now sized for 2; feeding a different length later must fail
        let mut other = [1.0, 2.0, 3.0];
        assert!(opt.update(0, &mut other, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn restore_matches_continued_run() {
        // Split a 6-step run at step 3 via save/restore of moments + t.
        let run = |split: bool| {
            let mut opt: Adam<f64> = Adam::new(0.05);
            let mut theta = [2.0_f64];
            for step in 0..6 {
                if split && step == 3 {
                    let (m, v, t) = (opt.moment1(0).to_vec(), opt.moment2(0).to_vec(), opt.step_count());
                    opt = Adam::new(0.05);
                    opt.restore_slot(0, m, v).unwrap();
                    opt.set_step_count(t);
                }
                let g = [theta[0].cos()];
                opt.begin_step();
                opt.update(0, &mut theta, &g).unwrap();
            }
            theta[0]
        };
        assert_eq!(run(false).to_bits(), run(true).to_bits());
    }
}
