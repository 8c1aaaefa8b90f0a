//! The two-phase training loop: MAE pretraining, then adversarial training
//! against the dual discriminators.
//!
//! A GAN step is three isolated sub-updates — image discriminator, feature
//! discriminator, generator — each on its own tape. During discriminator
//! updates the generator is lifted as constants (so its gradients are not
//! merely zero but nonexistent), and vice versa.
//!
//! Everything here is deterministic: batches are a pure function of
//! (seed, step) via [`crate::patch::assemble_batch`], so a run resumed from
//! a checkpoint replays exactly the batches an uninterrupted run would see.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{gan_d_loss, gan_g_loss, mae_loss, perceptual_loss, LossWeights};
use crate::model::{
    Discriminator, FeatureExtractor, Generator, GeneratorConfig, EXTRACTOR_CHANNELS,
};
use crate::optim::Adam;
use crate::patch::PatchPair;
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which half of the schedule a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Gan,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Gan => "gan",
        }
    }
}

/// Step counts, batch geometry and learning rates for one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub pretrain_steps: u64,
    pub gan_steps: u64,
    pub batch_size: usize,
    pub lr_pretrain: f64,
    pub lr_gan: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            pretrain_steps: 1000,
            gan_steps: 1000,
            batch_size: 4,
            lr_pretrain: 1e-4,
            lr_gan: 1e-4,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn total_steps(&self) -> u64 {
        self.pretrain_steps + self.gan_steps
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be positive"));
        }
        Ok(())
    }
}

/// Per-step record behind the one-line training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub phase: Phase,
    pub g_loss: Option<f64>,
    pub d_img_loss: Option<f64>,
    pub d_feat_loss: Option<f64>,
}

impl StepLog {
    /// `step <n> phase <pretrain|gan> g_loss <v> d_img_loss <v> d_feat_loss <v>`
    /// with `-` for fields the phase does not produce.
    pub fn line(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) => x.to_string(),
            None => String::from("-"),
        };
        format!(
            "step {} phase {} g_loss {} d_img_loss {} d_feat_loss {}",
            self.step,
            self.phase.as_str(),
            fmt(self.g_loss),
            fmt(self.d_img_loss),
            fmt(self.d_feat_loss)
        )
    }
}

/// Mutable training state: the three trainable models, the frozen
/// extractor, one Adam instance per model, and the global step counter.
pub struct Trainer<S: Scalar> {
    pub generator: Generator<Tensor<S>>,
    pub d_img: Discriminator<Tensor<S>>,
    pub d_feat: Discriminator<Tensor<S>>,
    pub extractor: FeatureExtractor<S>,
    pub weights: LossWeights,
    pub schedule: TrainSchedule,
    pub opt_g: Adam<S>,
    pub opt_d_img: Adam<S>,
    pub opt_d_feat: Adam<S>,
    /// Completed steps; also the index of the next batch to draw.
    pub step: u64,
}

/// Pulls gradients out of a lifted model in traversal order; slots without
/// a gradient come back as zeros of the right size.
fn collect_grads<S: Scalar>(vars: &[Var<'_, S>]) -> Vec<Vec<S>> {
    vars.iter()
        .map(|v| v.grad().unwrap_or_else(|| vec![S::zero(); v.numel()]))
        .collect()
}

impl<S: Scalar> Trainer<S> {
    pub fn new(
        config: &GeneratorConfig,
        schedule: TrainSchedule,
        weights: LossWeights,
        extractor_seed: u64,
    ) -> Result<Self> {
        schedule.validate()?;
        weights.validate()?;
        let generator = Generator::init(config, schedule.seed)?;
        let d_img = Discriminator::init(&mut rng_for(schedule.seed, stream::INIT_D_IMAGE, 0), 3);
        let d_feat = Discriminator::init(
            &mut rng_for(schedule.seed, stream::INIT_D_FEATURE, 0),
            EXTRACTOR_CHANNELS,
        );
        Ok(Trainer {
            generator,
            d_img,
            d_feat,
            extractor: FeatureExtractor::new(extractor_seed),
            weights,
            schedule,
            opt_g: Adam::new(schedule.lr_pretrain),
            opt_d_img: Adam::new(schedule.lr_gan),
            opt_d_feat: Adam::new(schedule.lr_gan),
            step: 0,
        })
    }

    /// Phase of the next step, or `None` when the schedule is exhausted.
    pub fn phase(&self) -> Option<Phase> {
        if self.step < self.schedule.pretrain_steps {
            Some(Phase::Pretrain)
        } else if self.step < self.schedule.total_steps() {
            Some(Phase::Gan)
        } else {
            None
        }
    }

    /// Runs the step the schedule calls for and advances the counter.
    pub fn train_step(&mut self, batch: &[PatchPair<S>]) -> Result<StepLog> {
        match self.phase() {
            Some(Phase::Pretrain) => self.pretrain_step(batch),
            Some(Phase::Gan) => self.gan_step(batch),
            None => Err(Error::contract("training schedule already completed")),
        }
    }

    /// One MAE-only generator update.
    pub fn pretrain_step(&mut self, batch: &[PatchPair<S>]) -> Result<StepLog> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let tape: Tape<S> = Tape::new();
        let g = self.generator.map(&mut |t| tape.leaf(t));
        let mut sample_losses = Vec::with_capacity(batch.len());
        for pair in batch {
            let sr = g.forward(tape.constant(&pair.lr))?;
            sample_losses.push(mae_loss(sr, tape.constant(&pair.hr))?);
        }
        let loss = tape.concat(&sample_losses)?.mean_all();
        tape.backward(loss)?;

        self.opt_g.lr = S::from_f64(self.schedule.lr_pretrain);
        apply_update(&mut self.generator, &g, &tape, &mut self.opt_g)?;

        let log = StepLog {
            step: self.step,
            phase: Phase::Pretrain,
            g_loss: Some(loss.item()?.to_f64()),
            d_img_loss: None,
            d_feat_loss: None,
        };
        self.step += 1;
        Ok(log)
    }

    /// One adversarial step: discriminator updates on detached SR, then a
    /// generator update against the (now frozen) discriminators.
    pub fn gan_step(&mut self, batch: &[PatchPair<S>]) -> Result<StepLog> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let sr_detached = self.detached_sr(batch)?;
        let d_img_loss = self.d_img_update(batch, &sr_detached)?;
        let d_feat_loss = self.d_feat_update(batch, &sr_detached)?;
        let g_loss = self.generator_update(batch)?;
        let log = StepLog {
            step: self.step,
            phase: Phase::Gan,
            g_loss: Some(g_loss),
            d_img_loss: Some(d_img_loss),
            d_feat_loss: Some(d_feat_loss),
        };
        self.step += 1;
        Ok(log)
    }

    /// SR outputs with the generator frozen — the `detach` in the
    /// discriminator objectives.
    pub fn detached_sr(&self, batch: &[PatchPair<S>]) -> Result<Vec<Tensor<S>>> {
        batch
            .iter()
            .map(|pair| {
                let tape: Tape<S> = Tape::new();
                let g = self.generator.map(&mut |t| tape.constant(t));
                Ok(g.forward(tape.constant(&pair.lr))?.value())
            })
            .collect()
    }

    /// Updates the image discriminator on real HR vs detached SR patches;
    /// generator parameters are not on this tape at all.
    pub fn d_img_update(&mut self, batch: &[PatchPair<S>], sr_detached: &[Tensor<S>]) -> Result<f64> {
        let tape: Tape<S> = Tape::new();
        let d = self.d_img.map(&mut |t| tape.leaf(t));
        let mut real = Vec::with_capacity(batch.len());
        let mut fake = Vec::with_capacity(batch.len());
        for (pair, sr) in batch.iter().zip(sr_detached) {
            real.push(d.forward(tape.constant(&pair.hr))?);
            fake.push(d.forward(tape.constant(sr))?);
        }
        let loss = gan_d_loss(tape.concat(&real)?, tape.concat(&fake)?)?;
        tape.backward(loss)?;

        self.opt_d_img.lr = S::from_f64(self.schedule.lr_gan);
        apply_update(&mut self.d_img, &d, &tape, &mut self.opt_d_img)?;
        Ok(loss.item()?.to_f64())
    }

    /// Same update for the feature discriminator, judging extractor maps.
    pub fn d_feat_update(&mut self, batch: &[PatchPair<S>], sr_detached: &[Tensor<S>]) -> Result<f64> {
        let tape: Tape<S> = Tape::new();
        let d = self.d_feat.map(&mut |t| tape.leaf(t));
        let mut real = Vec::with_capacity(batch.len());
        let mut fake = Vec::with_capacity(batch.len());
        for (pair, sr) in batch.iter().zip(sr_detached) {
            let hr_feat = self.extractor.extract(&tape, tape.constant(&pair.hr))?;
            let sr_feat = self.extractor.extract(&tape, tape.constant(sr))?;
            real.push(d.forward(hr_feat)?);
            fake.push(d.forward(sr_feat)?);
        }
        let loss = gan_d_loss(tape.concat(&real)?, tape.concat(&fake)?)?;
        tape.backward(loss)?;

        self.opt_d_feat.lr = S::from_f64(self.schedule.lr_gan);
        apply_update(&mut self.d_feat, &d, &tape, &mut self.opt_d_feat)?;
        Ok(loss.item()?.to_f64())
    }

    /// Generator update on the weighted three-term objective, with both
    /// discriminators lifted as constants. Zero-weight terms are skipped
    /// outright, so a (w_percep, 0, 0) configuration is exactly a
    /// perceptual-only update and a (0, w_img_gan, 0) one is purely
    /// adversarial.
    pub fn generator_update(&mut self, batch: &[PatchPair<S>]) -> Result<f64> {
        self.weights.validate()?;
        let tape: Tape<S> = Tape::new();
        let g = self.generator.map(&mut |t| tape.leaf(t));
        let d_i = self.d_img.map(&mut |t| tape.constant(t));
        let d_f = self.d_feat.map(&mut |t| tape.constant(t));

        let mut percep_terms = Vec::with_capacity(batch.len());
        let mut img_logits = Vec::new();
        let mut feat_logits = Vec::new();
        for pair in batch {
            let sr = g.forward(tape.constant(&pair.lr))?;
            let hr = tape.constant(&pair.hr);
            if self.weights.w_percep > 0.0 {
                percep_terms.push(perceptual_loss(&self.extractor, &tape, sr, hr)?);
            }
            if self.weights.w_img_gan > 0.0 {
                img_logits.push(d_i.forward(sr)?);
            }
            if self.weights.w_feat_gan > 0.0 {
                feat_logits.push(d_f.forward(self.extractor.extract(&tape, sr)?)?);
            }
        }
        let mut terms = Vec::new();
        if !percep_terms.is_empty() {
            terms.push(
                tape.concat(&percep_terms)?
                    .mean_all()
                    .scale(S::from_f64(self.weights.w_percep)),
            );
        }
        if !img_logits.is_empty() {
            terms.push(gan_g_loss(tape.concat(&img_logits)?).scale(S::from_f64(self.weights.w_img_gan)));
        }
        if !feat_logits.is_empty() {
            terms.push(gan_g_loss(tape.concat(&feat_logits)?).scale(S::from_f64(self.weights.w_feat_gan)));
        }
        let mut loss = terms[0];
        for term in &terms[1..] {
            loss = loss.add(*term)?;
        }
        tape.backward(loss)?;

        self.opt_g.lr = S::from_f64(self.schedule.lr_gan);
        apply_update(&mut self.generator, &g, &tape, &mut self.opt_g)?;
        Ok(loss.item()?.to_f64())
    }

    /// Adversarial loss of the current generator on a batch, without any
    /// update — the measurement used by the GAN-mechanics checks.
    pub fn generator_adversarial_loss(&self, batch: &[PatchPair<S>]) -> Result<f64> {
        let tape: Tape<S> = Tape::new();
        let g = self.generator.map(&mut |t| tape.constant(t));
        let d_i = self.d_img.map(&mut |t| tape.constant(t));
        let mut logits = Vec::with_capacity(batch.len());
        for pair in batch {
            logits.push(d_i.forward(g.forward(tape.constant(&pair.lr))?)?);
        }
        Ok(gan_g_loss(tape.concat(&logits)?).item()?.to_f64())
    }

    /// All persistent state as named tensors: parameters, Adam moments,
    /// per-optimizer step counters, and the global step counter.
    pub fn export_state(&self) -> Vec<(String, Tensor<S>)> {
        let mut out: Vec<(String, Tensor<S>)> = Vec::new();
        self.generator.for_each_named("generator", &mut |name, t: &Tensor<S>| {
            out.push((name, t.clone()));
        });
        self.d_img.for_each_named("d_img", &mut |name, t: &Tensor<S>| {
            out.push((name, t.clone()));
        });
        self.d_feat.for_each_named("d_feat", &mut |name, t: &Tensor<S>| {
            out.push((name, t.clone()));
        });

        let mut adam_entries = Vec::new();
        export_adam(&self.generator_param_names(), &self.opt_g, "generator", &mut adam_entries);
        export_adam(&self.d_img_param_names(), &self.opt_d_img, "d_img", &mut adam_entries);
        export_adam(&self.d_feat_param_names(), &self.opt_d_feat, "d_feat", &mut adam_entries);
        out.extend(adam_entries);

        out.push((String::from("adam.t.generator"), counter_tensor(self.opt_g.step_count())));
        out.push((String::from("adam.t.d_img"), counter_tensor(self.opt_d_img.step_count())));
        out.push((String::from("adam.t.d_feat"), counter_tensor(self.opt_d_feat.step_count())));
        out.push((String::from("trainer.step"), counter_tensor(self.step)));
        out
    }

    /// Restores everything `export_state` emits. Parameter entries are
    /// mandatory; Adam moments are optional (a freshly initialized
    /// optimizer has none).
    pub fn import_state(&mut self, entries: &BTreeMap<String, Tensor<S>>) -> Result<()> {
        let mut restore_err: Option<Error> = None;
        let mut restore = |name: String, t: &mut Tensor<S>| {
            if restore_err.is_some() {
                return;
            }
            match entries.get(&name) {
                Some(src) if src.shape() == t.shape() => {
                    let grad_flag = t.requires_grad();
                    *t = src.clone();
                    t.set_requires_grad(grad_flag);
                }
                Some(src) => {
                    restore_err = Some(Error::contract(format!(
                        "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                        src.shape(),
                        t.shape()
                    )));
                }
                None => {
                    restore_err = Some(Error::contract(format!("checkpoint is missing tensor {name}")));
                }
            }
        };
        self.generator.for_each_named_mut("generator", &mut restore);
        self.d_img.for_each_named_mut("d_img", &mut restore);
        self.d_feat.for_each_named_mut("d_feat", &mut restore);
        if let Some(e) = restore_err {
            return Err(e);
        }

        import_adam(&self.generator_param_names(), &mut self.opt_g, "generator", entries)?;
        import_adam(&self.d_img_param_names(), &mut self.opt_d_img, "d_img", entries)?;
        import_adam(&self.d_feat_param_names(), &mut self.opt_d_feat, "d_feat", entries)?;

        self.opt_g.set_step_count(read_counter(entries, "adam.t.generator")?);
        self.opt_d_img.set_step_count(read_counter(entries, "adam.t.d_img")?);
        self.opt_d_feat.set_step_count(read_counter(entries, "adam.t.d_feat")?);
        self.step = read_counter(entries, "trainer.step")?;
        Ok(())
    }

    fn generator_param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.generator.for_each_named("generator", &mut |name, _| names.push(name));
        names
    }

    fn d_img_param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.d_img.for_each_named("d_img", &mut |name, _| names.push(name));
        names
    }

    fn d_feat_param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.d_feat.for_each_named("d_feat", &mut |name, _| names.push(name));
        names
    }
}

fn counter_tensor<S: Scalar>(v: u64) -> Tensor<S> {
    Tensor::scalar(S::from_f64(v as f64))
}

fn read_counter<S: Scalar>(entries: &BTreeMap<String, Tensor<S>>, name: &str) -> Result<u64> {
    let t = entries
        .get(name)
        .ok_or_else(|| Error::contract(format!("checkpoint is missing counter {name}")))?;
    if t.numel() != 1 {
        return Err(Error::contract(format!("counter {name} is not scalar")));
    }
    Ok(t.data()[0].to_f64() as u64)
}

fn export_adam<S: Scalar>(
    names: &[String],
    opt: &Adam<S>,
    model: &str,
    out: &mut Vec<(String, Tensor<S>)>,
) {
    for (slot, name) in names.iter().enumerate() {
        if slot >= opt.slot_count() || opt.moment1(slot).is_empty() {
            continue;
        }
        let suffix = name.strip_prefix(&format!("{model}.")).unwrap_or(name);
        out.push((
            format!("adam.m.{model}.{suffix}"),
            Tensor::from_vec(opt.moment1(slot).to_vec()),
        ));
        out.push((
            format!("adam.v.{model}.{suffix}"),
            Tensor::from_vec(opt.moment2(slot).to_vec()),
        ));
    }
}

fn import_adam<S: Scalar>(
    names: &[String],
    opt: &mut Adam<S>,
    model: &str,
    entries: &BTreeMap<String, Tensor<S>>,
) -> Result<()> {
    for (slot, name) in names.iter().enumerate() {
        let suffix = name.strip_prefix(&format!("{model}.")).unwrap_or(name);
        let m_key = format!("adam.m.{model}.{suffix}");
        let v_key = format!("adam.v.{model}.{suffix}");
        match (entries.get(&m_key), entries.get(&v_key)) {
            (Some(m), Some(v)) => {
                opt.restore_slot(slot, m.data().to_vec(), v.data().to_vec())?;
            }
            (None, None) => {}
            _ => {
                return Err(Error::contract(format!(
                    "checkpoint has only one of the adam moment pair for {name}"
                )));
            }
        }
    }
    Ok(())
}

/// Writes gradients from the lifted model back into the stored tensors via
/// one Adam step. `lifted` must be `stored.map(leaf)` from this tape.
fn apply_update<S, M, L>(stored: &mut M, lifted: &L, tape: &Tape<S>, opt: &mut Adam<S>) -> Result<()>
where
    S: Scalar,
    M: ModelParams<S>,
    L: ModelVars<S>,
{
    let _ = tape;
    let vars = lifted.param_vars();
    let grads = collect_grads(&vars);
    opt.begin_step();
    let mut slot = 0;
    let mut first_err: Option<Error> = None;
    stored.visit_params_mut(&mut |t: &mut Tensor<S>| {
        if first_err.is_none() {
            if let Err(e) = opt.update(slot, t.data_mut(), &grads[slot]) {
                first_err = Some(e);
            }
        }
        slot += 1;
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Uniform access to a stored model's parameter tensors.
trait ModelParams<S: Scalar> {
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<S>));
}

/// Uniform access to a lifted model's parameter variables.
trait ModelVars<S: Scalar> {
    fn param_vars(&self) -> Vec<Var<'_, S>>;
}

impl<S: Scalar> ModelParams<S> for Generator<Tensor<S>> {
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<S>)) {
        self.for_each_mut(&mut |t| f(t));
    }
}

impl<S: Scalar> ModelParams<S> for Discriminator<Tensor<S>> {
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<S>)) {
        self.for_each_mut(&mut |t| f(t));
    }
}

impl<'t, S: Scalar> ModelVars<S> for Generator<Var<'t, S>> {
    fn param_vars(&self) -> Vec<Var<'_, S>> {
        let mut vars = Vec::new();
        self.for_each(&mut |v| vars.push(*v));
        vars
    }
}

impl<'t, S: Scalar> ModelVars<S> for Discriminator<Var<'t, S>> {
    fn param_vars(&self) -> Vec<Var<'_, S>> {
        let mut vars = Vec::new();
        self.for_each(&mut |v| vars.push(*v));
        vars
    }
}
