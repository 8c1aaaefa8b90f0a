//! Training objectives: MAE, perceptual (feature-space MSE), and the GAN
//! discriminator/generator terms in numerically stable log-sigmoid form.

use alloc::format;

use crate::error::{Error, Result};
use crate::model::FeatureExtractor;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::shape_string;

/// Relative weights of the three generator loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_percep: f64,
    pub w_img_gan: f64,
    pub w_feat_gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_percep: 1.0, w_img_gan: 1e-3, w_feat_gan: 1e-3 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_percep, self.w_img_gan, self.w_feat_gan];
        if all.iter().any(|&w| w < 0.0) {
            return Err(Error::contract("loss weights must be non-negative"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::contract("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Mean absolute error over all elements; subgradient at 0 is 0.
pub fn mae_loss<'t, S: Scalar>(sr: Var<'t, S>, hr: Var<'t, S>) -> Result<Var<'t, S>> {
    if sr.shape() != hr.shape() {
        return Err(Error::shape(format!(
            "mae_loss shapes differ: {} vs {}",
            shape_string(&sr.shape()),
            shape_string(&hr.shape())
        )));
    }
    Ok(sr.sub(hr)?.abs().mean_all())
}

/// Mean squared distance in extractor feature space. The reference side is
/// detached, so gradients reach `sr` only.
pub fn perceptual_loss<'t, S: Scalar>(
    fe: &FeatureExtractor<S>,
    tape: &'t Tape<S>,
    sr: Var<'t, S>,
    hr: Var<'t, S>,
) -> Result<Var<'t, S>> {
    if sr.shape() != hr.shape() {
        return Err(Error::shape(format!(
            "perceptual_loss shapes differ: {} vs {}",
            shape_string(&sr.shape()),
            shape_string(&hr.shape())
        )));
    }
    let f_sr = fe.extract(tape, sr)?;
    let f_hr = fe.extract(tape, hr.detach())?;
    let diff = f_sr.sub(f_hr)?;
    Ok(diff.mul(diff)?.mean_all())
}

/// Discriminator objective −mean(log σ(real)) − mean(log(1 − σ(fake))),
/// using log(1−σ(x)) = log σ(−x). Accepts scalar or batched logits.
pub fn gan_d_loss<'t, S: Scalar>(real_logit: Var<'t, S>, fake_logit: Var<'t, S>) -> Result<Var<'t, S>> {
    let real_term = real_logit.log_sigmoid().mean_all().neg();
    let fake_term = fake_logit.neg().log_sigmoid().mean_all().neg();
    real_term.add(fake_term)
}

/// Non-saturating generator objective −mean(log σ(fake)).
pub fn gan_g_loss<'t, S: Scalar>(fake_logit: Var<'t, S>) -> Var<'t, S> {
    fake_logit.log_sigmoid().mean_all().neg()
}

/// Weighted three-term generator loss:
/// w_percep·perceptual + w_img_gan·gan_g(img) + w_feat_gan·gan_g(feat).
pub fn total_generator_loss<'t, S: Scalar>(
    w: &LossWeights,
    fe: &FeatureExtractor<S>,
    tape: &'t Tape<S>,
    sr: Var<'t, S>,
    hr: Var<'t, S>,
    img_fake_logit: Var<'t, S>,
    feat_fake_logit: Var<'t, S>,
) -> Result<Var<'t, S>> {
    let percep = perceptual_loss(fe, tape, sr, hr)?.scale(S::from_f64(w.w_percep));
    let img = gan_g_loss(img_fake_logit).scale(S::from_f64(w.w_img_gan));
    let feat = gan_g_loss(feat_fake_logit).scale(S::from_f64(w.w_feat_gan));
    percep.add(img)?.add(feat)
}
