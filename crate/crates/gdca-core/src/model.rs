//! The GDCA model family: ×4 super-resolution generator, the shared
//! discriminator architecture (instantiated once for images, once for
//! feature maps), and the frozen random-projection feature extractor that
//! feeds the perceptual loss and the feature discriminator.
//!
//! Every model is generic over its parameter storage `P`: at rest `P =
//! Tensor<S>`, during a step `map` lifts the whole structure onto a tape as
//! `P = Var<'t, S>`. Traversal order is fixed and shared by `map`,
//! `for_each*` and the named walkers, so parameter lists, gradients,
//! optimizer slots and checkpoint entries all line up by construction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense};
use crate::rng::{rng_for, stream, Rng};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{shape_string, Tensor};

/// Negative slope shared by every leaky ReLU in the model family.
pub const LRELU_SLOPE: f64 = 0.2;

fn slope<S: Scalar>() -> S {
    S::from_f64(LRELU_SLOPE)
}

/// Hyperparameters of the generator. The upscale factor is fixed at ×4
/// (two ×2 sub-pixel stages).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub n_ca_blocks: usize,
    pub n_le_blocks: usize,
    pub ca_reduction: usize,
    pub skip_weight_init: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_channels: 64,
            n_ca_blocks: 4,
            n_le_blocks: 4,
            ca_reduction: 4,
            skip_weight_init: 1.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.n_ca_blocks == 0 || self.n_le_blocks == 0 || self.ca_reduction == 0 {
            return Err(Error::contract("generator config fields must be positive"));
        }
        if self.base_channels % self.ca_reduction != 0 {
            return Err(Error::contract(format!(
                "base_channels {} not divisible by ca_reduction {}",
                self.base_channels, self.ca_reduction
            )));
        }
        Ok(())
    }
}

/// Residual block gated by channel attention: y = x + s ⊙ f(x) with
/// f = conv→lrelu→conv and s a per-channel sigmoid gate computed from the
/// globally pooled statistics of f(x).
#[derive(Debug, Clone)]
pub struct CaBlock<P> {
    pub conv1: Conv2d<P>,
    pub conv2: Conv2d<P>,
    pub squeeze: Dense<P>,
    pub excite: Dense<P>,
}

impl<P> CaBlock<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> CaBlock<Q> {
        CaBlock {
            conv1: self.conv1.map(f),
            conv2: self.conv2.map(f),
            squeeze: self.squeeze.map(f),
            excite: self.excite.map(f),
        }
    }

    pub fn for_each_named(&self, prefix: &str, f: &mut impl FnMut(String, &P)) {
        self.conv1.for_each_named(&format!("{prefix}.conv1"), f);
        self.conv2.for_each_named(&format!("{prefix}.conv2"), f);
        self.squeeze.for_each_named(&format!("{prefix}.squeeze"), f);
        self.excite.for_each_named(&format!("{prefix}.excite"), f);
    }

    pub fn for_each_named_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut P)) {
        self.conv1.for_each_named_mut(&format!("{prefix}.conv1"), f);
        self.conv2.for_each_named_mut(&format!("{prefix}.conv2"), f);
        self.squeeze.for_each_named_mut(&format!("{prefix}.squeeze"), f);
        self.excite.for_each_named_mut(&format!("{prefix}.excite"), f);
    }
}

impl<S: Scalar> CaBlock<Tensor<S>> {
    fn init(rng: &mut Rng, channels: usize, reduction: usize) -> Self {
        CaBlock {
            conv1: Conv2d::init(rng, channels, channels, 3, 1, 1),
            conv2: Conv2d::init(rng, channels, channels, 3, 1, 1),
            squeeze: Dense::init(rng, channels, channels / reduction),
            excite: Dense::init(rng, channels / reduction, channels),
        }
    }
}

impl<'t, S: Scalar> CaBlock<Var<'t, S>> {
    pub fn forward(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let f = self.conv2.forward(self.conv1.forward(x)?.leaky_relu(slope()))?;
        let pooled = f.global_avg_pool()?;
        let gate = self
            .excite
            .forward(self.squeeze.forward(pooled)?.leaky_relu(slope()))?
            .sigmoid();
        x.add(f.mul(gate)?)
    }
}

/// Plain residual block, no normalization, no gate: y = x + conv(lrelu(conv(x))).
#[derive(Debug, Clone)]
pub struct LeBlock<P> {
    pub conv1: Conv2d<P>,
    pub conv2: Conv2d<P>,
}

impl<P> LeBlock<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> LeBlock<Q> {
        LeBlock { conv1: self.conv1.map(f), conv2: self.conv2.map(f) }
    }

    pub fn for_each_named(&self, prefix: &str, f: &mut impl FnMut(String, &P)) {
        self.conv1.for_each_named(&format!("{prefix}.conv1"), f);
        self.conv2.for_each_named(&format!("{prefix}.conv2"), f);
    }

    pub fn for_each_named_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut P)) {
        self.conv1.for_each_named_mut(&format!("{prefix}.conv1"), f);
        self.conv2.for_each_named_mut(&format!("{prefix}.conv2"), f);
    }
}

impl<S: Scalar> LeBlock<Tensor<S>> {
    fn init(rng: &mut Rng, channels: usize) -> Self {
        LeBlock {
            conv1: Conv2d::init(rng, channels, channels, 3, 1, 1),
            conv2: Conv2d::init(rng, channels, channels, 3, 1, 1),
        }
    }
}

impl<'t, S: Scalar> LeBlock<Var<'t, S>> {
    pub fn forward(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.add(self.conv2.forward(self.conv1.forward(x)?.leaky_relu(slope()))?)
    }
}

/// ×4 super-resolution generator.
///
/// head(5×5) → CA blocks → LE blocks → join with the weighted long skip
/// (body + skip_weight·head) → fusion conv → two (conv → pixel_shuffle ×2 →
/// lrelu) stages → linear tail conv. Output stays unclamped here; inference
/// clamps to [0,1] after the forward pass.
#[derive(Debug, Clone)]
pub struct Generator<P> {
    pub head: Conv2d<P>,
    pub ca_blocks: Vec<CaBlock<P>>,
    pub le_blocks: Vec<LeBlock<P>>,
    pub skip_weight: P,
    pub fusion: Conv2d<P>,
    pub upsample1: Conv2d<P>,
    pub upsample2: Conv2d<P>,
    pub tail: Conv2d<P>,
}

impl<P> Generator<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Generator<Q> {
        Generator {
            head: self.head.map(f),
            ca_blocks: self.ca_blocks.iter().map(|b| b.map(f)).collect(),
            le_blocks: self.le_blocks.iter().map(|b| b.map(f)).collect(),
            skip_weight: f(&self.skip_weight),
            fusion: self.fusion.map(f),
            upsample1: self.upsample1.map(f),
            upsample2: self.upsample2.map(f),
            tail: self.tail.map(f),
        }
    }

    pub fn for_each_named(&self, prefix: &str, f: &mut impl FnMut(String, &P)) {
        self.head.for_each_named(&format!("{prefix}.head"), f);
        for (i, b) in self.ca_blocks.iter().enumerate() {
            b.for_each_named(&format!("{prefix}.ca{i}"), f);
        }
        for (i, b) in self.le_blocks.iter().enumerate() {
            b.for_each_named(&format!("{prefix}.le{i}"), f);
        }
        f(format!("{prefix}.skip_weight"), &self.skip_weight);
        self.fusion.for_each_named(&format!("{prefix}.fusion"), f);
        self.upsample1.for_each_named(&format!("{prefix}.upsample1"), f);
        self.upsample2.for_each_named(&format!("{prefix}.upsample2"), f);
        self.tail.for_each_named(&format!("{prefix}.tail"), f);
    }

    pub fn for_each_named_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut P)) {
        self.head.for_each_named_mut(&format!("{prefix}.head"), f);
        for (i, b) in self.ca_blocks.iter_mut().enumerate() {
            b.for_each_named_mut(&format!("{prefix}.ca{i}"), f);
        }
        for (i, b) in self.le_blocks.iter_mut().enumerate() {
            b.for_each_named_mut(&format!("{prefix}.le{i}"), f);
        }
        f(format!("{prefix}.skip_weight"), &mut self.skip_weight);
        self.fusion.for_each_named_mut(&format!("{prefix}.fusion"), f);
        self.upsample1.for_each_named_mut(&format!("{prefix}.upsample1"), f);
        self.upsample2.for_each_named_mut(&format!("{prefix}.upsample2"), f);
        self.tail.for_each_named_mut(&format!("{prefix}.tail"), f);
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        self.for_each_named("g", &mut |_, p| f(p));
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut P)) {
        self.for_each_named_mut("g", &mut |_, p| f(p));
    }
}

impl<S: Scalar> Generator<Tensor<S>> {
    /// Fresh generator; all draws come from the given master seed's
    /// generator-init stream, so identical (config, seed) pairs produce
    /// identical parameters.
    pub fn init(config: &GeneratorConfig, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = &mut rng_for(master_seed, stream::INIT_GENERATOR, 0);
        let c = config.base_channels;
        Ok(Generator {
            head: Conv2d::init(rng, 3, c, 5, 1, 2),
            ca_blocks: (0..config.n_ca_blocks)
                .map(|_| CaBlock::init(rng, c, config.ca_reduction))
                .collect(),
            le_blocks: (0..config.n_le_blocks).map(|_| LeBlock::init(rng, c)).collect(),
            skip_weight: Tensor::scalar(S::from_f64(config.skip_weight_init)).with_requires_grad(),
            fusion: Conv2d::init(rng, c, c, 3, 1, 1),
            upsample1: Conv2d::init(rng, c, 4 * c, 3, 1, 1),
            upsample2: Conv2d::init(rng, c, 4 * c, 3, 1, 1),
            tail: Conv2d::init(rng, c, 3, 3, 1, 1),
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each(&mut |t| n += t.numel());
        n
    }

    /// Full-precision inference: forward on a private tape, then clamp the
    /// output to [0,1].
    pub fn infer(&self, lr: &Tensor<S>) -> Result<Tensor<S>> {
        let tape: Tape<S> = Tape::new();
        let lifted = self.map(&mut |t| tape.constant(t));
        let sr = lifted.forward(tape.constant(lr))?;
        let mut out = sr.value();
        for v in out.data_mut() {
            *v = v.max(S::zero()).min(S::one());
        }
        Ok(out)
    }
}

impl<'t, S: Scalar> Generator<Var<'t, S>> {
    /// Training-mode forward: [3,H,W] → [3,4H,4W], unclamped.
    pub fn forward(&self, lr: Var<'t, S>) -> Result<Var<'t, S>> {
        let in_shape = lr.shape();
        if in_shape.len() != 3 || in_shape[0] != 3 {
            return Err(Error::shape(format!(
                "generator input must be [3,H,W], got {}",
                shape_string(&in_shape)
            )));
        }
        let head = self.head.forward(lr)?;
        let mut body = head;
        for block in &self.ca_blocks {
            body = block.forward(body)?;
        }
        for block in &self.le_blocks {
            body = block.forward(body)?;
        }
        let joined = body.add(head.mul(self.skip_weight)?)?;
        let fused = self.fusion.forward(joined)?;
        let up1 = self.upsample1.forward(fused)?.pixel_shuffle(2)?.leaky_relu(slope());
        let up2 = self.upsample2.forward(up1)?.pixel_shuffle(2)?.leaky_relu(slope());
        self.tail.forward(up2)
    }
}

/// Binary real/fake critic ending in a single unbounded logit.
///
/// Six 3×3 convs in stride-1/stride-2 pairs (32→32→64→64→128→128), leaky
/// ReLU throughout, global average pooling (so any input size ≥ the
/// receptive minimum works), then a 128→64→1 classifier head.
#[derive(Debug, Clone)]
pub struct Discriminator<P> {
    pub convs: Vec<Conv2d<P>>,
    pub fc1: Dense<P>,
    pub fc2: Dense<P>,
}

impl<P> Discriminator<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Discriminator<Q> {
        Discriminator {
            convs: self.convs.iter().map(|c| c.map(f)).collect(),
            fc1: self.fc1.map(f),
            fc2: self.fc2.map(f),
        }
    }

    pub fn for_each_named(&self, prefix: &str, f: &mut impl FnMut(String, &P)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.for_each_named(&format!("{prefix}.conv{i}"), f);
        }
        self.fc1.for_each_named(&format!("{prefix}.fc1"), f);
        self.fc2.for_each_named(&format!("{prefix}.fc2"), f);
    }

    pub fn for_each_named_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut P)) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.for_each_named_mut(&format!("{prefix}.conv{i}"), f);
        }
        self.fc1.for_each_named_mut(&format!("{prefix}.fc1"), f);
        self.fc2.for_each_named_mut(&format!("{prefix}.fc2"), f);
    }

    pub fn for_each(&self, f: &mut impl FnMut(&P)) {
        self.for_each_named("d", &mut |_, p| f(p));
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut P)) {
        self.for_each_named_mut("d", &mut |_, p| f(p));
    }
}

/// Channel plan of the conv stack: (output channels, stride) per layer.
const DISC_PLAN: [(usize, usize); 6] =
    [(32, 1), (32, 2), (64, 1), (64, 2), (128, 1), (128, 2)];

impl<S: Scalar> Discriminator<Tensor<S>> {
    pub fn init(rng: &mut Rng, input_channels: usize) -> Self {
        let mut convs = Vec::with_capacity(DISC_PLAN.len());
        let mut in_c = input_channels;
        for (out_c, stride) in DISC_PLAN {
            convs.push(Conv2d::init(rng, in_c, out_c, 3, stride, 1));
            in_c = out_c;
        }
        Discriminator { convs, fc1: Dense::init(rng, 128, 64), fc2: Dense::init(rng, 64, 1) }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each(&mut |t| n += t.numel());
        n
    }
}

impl<'t, S: Scalar> Discriminator<Var<'t, S>> {
    /// [C,H,W] → [1] logit. Probabilities are taken inside the loss, never here.
    pub fn forward(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(h)?.leaky_relu(slope());
        }
        let pooled = h.global_avg_pool()?;
        let hidden = self.fc1.forward(pooled)?.leaky_relu(slope());
        self.fc2.forward(hidden)
    }
}

/// Frozen random-projection feature network standing in for a pretrained
/// perceptual backbone. Four stages of (3×3 stride-1 conv → leaky ReLU →
/// 3×3 stride-2 conv) take 3 channels to 128 at 1/16 spatial resolution.
///
/// Parameters are drawn once from the seed and never trained; they are
/// lifted as non-tracking constants, so input gradients flow through the
/// stack while parameter gradients do not exist at all.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<S: Scalar> {
    convs: Vec<Conv2d<Tensor<S>>>,
    seed: u64,
}

/// Stage output channels of the extractor.
const EXTRACTOR_PLAN: [usize; 4] = [32, 64, 96, 128];

/// Overall downsampling factor of the extractor (four stride-2 convs).
pub const EXTRACTOR_FACTOR: usize = 16;

/// Channels of the extractor output, i.e. the feature-discriminator input.
pub const EXTRACTOR_CHANNELS: usize = 128;

impl<S: Scalar> FeatureExtractor<S> {
    pub fn new(seed: u64) -> Self {
        let rng = &mut rng_for(seed, stream::EXTRACTOR, 0);
        let mut convs = Vec::with_capacity(2 * EXTRACTOR_PLAN.len());
        let mut in_c = 3;
        for out_c in EXTRACTOR_PLAN {
            let mut a = Conv2d::init(rng, in_c, out_c, 3, 1, 1);
            let mut b = Conv2d::init(rng, out_c, out_c, 3, 2, 1);
            a.for_each_mut(&mut |t| t.set_requires_grad(false));
            b.for_each_mut(&mut |t| t.set_requires_grad(false));
            convs.push(a);
            convs.push(b);
            in_c = out_c;
        }
        FeatureExtractor { convs, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Read-only visit of every stored parameter tensor.
    pub fn for_each_param(&self, f: &mut impl FnMut(&Tensor<S>)) {
        for conv in &self.convs {
            conv.for_each(f);
        }
    }

    /// [3,H,W] → [128,H/16,W/16]; H and W must be divisible by 16.
    pub fn extract<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let in_shape = x.shape();
        let ok = matches!(in_shape[..], [3, h, w] if h % EXTRACTOR_FACTOR == 0 && w % EXTRACTOR_FACTOR == 0);
        if !ok {
            return Err(Error::shape(format!(
                "feature extractor needs [3,H,W] with H,W divisible by {EXTRACTOR_FACTOR}, got {}",
                shape_string(&in_shape)
            )));
        }
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            let lifted = conv.map(&mut |t| tape.constant(t));
            h = lifted.forward(h)?;
            if i % 2 == 0 {
                h = h.leaky_relu(slope());
            }
        }
        Ok(h)
    }
}
