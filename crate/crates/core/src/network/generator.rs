use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{concat_pair, ClassVolume, LabeledPair, NormImage};
use crate::error::{Error, Result};
use crate::nn::{
    softmax_channels, softmax_channels_backward, Activation, Conv2d, ConvBlock, ConvBlockTrace,
    Padding, Param, Parameters,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Narrowest trunk accepted; small enough for finite-difference checks on tiny models.
pub const MIN_BASE_CHANNELS: usize = 4;

/// Layer schedule of a [`GeneratorModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Class count `M`; 0 inherits the training configuration's value.
    #[serde(default)]
    pub classes: usize,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    #[serde(default = "default_blocks")]
    pub res_blocks: usize,
    /// Block count used instead of `res_blocks` for inputs of at most 64 pixels per side.
    #[serde(default = "default_small_blocks")]
    pub small_input_res_blocks: Option<usize>,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_base() -> usize {
    64
}
fn default_blocks() -> usize {
    9
}
fn default_small_blocks() -> Option<usize> {
    Some(6)
}
pub(crate) fn default_init_std() -> f64 {
    0.02
}

impl GeneratorConfig {
    pub fn new(classes: usize) -> Self {
        GeneratorConfig {
            classes,
            base_channels: default_base(),
            res_blocks: default_blocks(),
            small_input_res_blocks: default_small_blocks(),
            init_std: default_init_std(),
        }
    }

    pub fn with_base_channels(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    pub fn with_res_blocks(mut self, blocks: usize) -> Self {
        self.res_blocks = blocks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("generator classes {} < 2", self.classes)));
        }
        if self.res_blocks < 1 {
            return Err(Error::Config("generator needs at least one residual block".into()));
        }
        if self.base_channels < MIN_BASE_CHANNELS {
            return Err(Error::Config(format!(
                "generator base_channels {} < {MIN_BASE_CHANNELS}",
                self.base_channels
            )));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config(format!("init_std {} invalid", self.init_std)));
        }
        Ok(())
    }

    /// Applies the small-input block reduction for images of the given side length.
    pub fn resolved_for(&self, side: usize) -> GeneratorConfig {
        let mut cfg = self.clone();
        if side <= 64 {
            if let Some(small) = self.small_input_res_blocks {
                cfg.res_blocks = self.res_blocks.min(small);
            }
        }
        cfg.small_input_res_blocks = None;
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HeadKind {
    Image,
    Classes,
}

#[derive(Clone, Debug)]
struct ResBlock<T> {
    a: ConvBlock<T>,
    b: ConvBlock<T>,
}

#[derive(Clone, Debug)]
struct Decoder<T> {
    kind: HeadKind,
    ups: Vec<ConvBlock<T>>,
    out: ConvBlock<T>,
}

#[derive(Clone, Debug)]
struct DecoderTrace<T> {
    ups: Vec<ConvBlockTrace<T>>,
    out: ConvBlockTrace<T>,
    /// tanh output or softmax probabilities
    activated: Tensor<T>,
}

/// Saved activations of one [`GeneratorModel::forward`] call.
#[derive(Clone, Debug)]
pub struct GeneratorTrace<T> {
    stem: ConvBlockTrace<T>,
    down: Vec<ConvBlockTrace<T>>,
    res: Vec<(ConvBlockTrace<T>, ConvBlockTrace<T>)>,
    image: DecoderTrace<T>,
    classes: DecoderTrace<T>,
}

/// Output of a generator: planar image in `[-1,1]` and per-pixel class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Translation<T> {
    /// `[N, 3, H, W]`
    pub image: Tensor<T>,
    /// `[N, M, H, W]`
    pub probs: Tensor<T>,
}

impl<T: Scalar> Translation<T> {
    /// `[N, 3 + M, H, W]` stack with probabilities re-centered as `2p - 1`, the form consumed
    /// by generators and discriminators.
    pub fn packed(&self) -> Tensor<T> {
        let centered = self.probs.map(|p| p + p - T::one());
        Tensor::concat_channels(&self.image, &centered).expect("generator outputs share shape")
    }

    /// Splits a gradient w.r.t. [`Translation::packed`] into image and probability gradients.
    pub fn unpack_grad(grad: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let (img, mut cls) = grad.split_channels(3);
        cls.scale(T::lit(2.0));
        (img, cls)
    }

    pub fn num_classes(&self) -> usize {
        self.probs.c()
    }
}

/// Joint encoder with separate image (tanh) and class (softmax) decoders.
#[derive(Clone, Debug)]
pub struct GeneratorModel<T> {
    cfg: GeneratorConfig,
    stem: ConvBlock<T>,
    down: Vec<ConvBlock<T>>,
    res: Vec<ResBlock<T>>,
    image_head: Decoder<T>,
    class_head: Decoder<T>,
}

impl<T: Scalar> GeneratorModel<T> {
    /// Builds a generator with Gaussian-initialized weights drawn from `seed`.
    pub fn new(cfg: &GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = cfg.init_std;
        let b = cfg.base_channels;
        let m = cfg.classes;
        let mut conv = |cin, cout, k, s, p, pad| Conv2d::new(cin, cout, k, s, p, pad, std, &mut rng);

        let stem = ConvBlock::new(conv(3 + m, b, 7, 1, 3, Padding::Reflect), false, true, Activation::Relu);
        let down = vec![
            ConvBlock::new(conv(b, 2 * b, 3, 2, 1, Padding::Zeros), false, true, Activation::Relu),
            ConvBlock::new(conv(2 * b, 4 * b, 3, 2, 1, Padding::Zeros), false, true, Activation::Relu),
        ];
        let res = (0..cfg.res_blocks)
            .map(|_| ResBlock {
                a: ConvBlock::new(conv(4 * b, 4 * b, 3, 1, 1, Padding::Reflect), false, true, Activation::Relu),
                b: ConvBlock::new(conv(4 * b, 4 * b, 3, 1, 1, Padding::Reflect), false, true, Activation::Identity),
            })
            .collect();
        let mut decoder = |kind, out_ch| Decoder {
            kind,
            ups: vec![
                ConvBlock::new(conv(4 * b, 2 * b, 3, 1, 1, Padding::Reflect), true, true, Activation::Relu),
                ConvBlock::new(conv(2 * b, b, 3, 1, 1, Padding::Reflect), true, true, Activation::Relu),
            ],
            out: ConvBlock::new(conv(b, out_ch, 7, 1, 3, Padding::Reflect), false, false, Activation::Identity),
        };
        let image_head = decoder(HeadKind::Image, 3);
        let class_head = decoder(HeadKind::Classes, m);
        Ok(GeneratorModel {
            cfg: cfg.clone(),
            stem,
            down,
            res,
            image_head,
            class_head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn num_classes(&self) -> usize {
        self.cfg.classes
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.c() != 3 + self.cfg.classes {
            return Err(Error::ClassCount {
                expected: self.cfg.classes,
                found: x.c().saturating_sub(3),
            });
        }
        if !x.h().is_multiple_of(4) || !x.w().is_multiple_of(4) || x.h() < 8 || x.w() < 8 {
            return Err(Error::shape(format!(
                "generator input {}x{} must be at least 8 and divisible by 4",
                x.h(),
                x.w()
            )));
        }
        Ok(())
    }

    /// Translates a `[N, 3 + M, H, W]` stack.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Translation<T>, GeneratorTrace<T>)> {
        self.check_input(x)?;
        let (mut h, stem) = self.stem.forward(x);
        let mut down = Vec::with_capacity(self.down.len());
        for block in &self.down {
            let (y, t) = block.forward(&h);
            down.push(t);
            h = y;
        }
        let mut res = Vec::with_capacity(self.res.len());
        for block in &self.res {
            let (a, ta) = block.a.forward(&h);
            let (mut b, tb) = block.b.forward(&a);
            b.add_assign(&h);
            res.push((ta, tb));
            h = b;
        }
        let (image, image_trace) = self.image_head.forward(&h);
        let (probs, class_trace) = self.class_head.forward(&h);
        Ok((
            Translation { image, probs },
            GeneratorTrace {
                stem,
                down,
                res,
                image: image_trace,
                classes: class_trace,
            },
        ))
    }

    /// Translates one labeled pair into an image and a simplex class volume.
    pub fn translate(&self, pair: &LabeledPair<T>) -> Result<(NormImage<T>, ClassVolume<T>)> {
        if pair.num_classes() != self.cfg.classes {
            return Err(Error::ClassCount {
                expected: self.cfg.classes,
                found: pair.num_classes(),
            });
        }
        let (out, _) = self.forward(&concat_pair(pair)?)?;
        Ok((
            NormImage::from_planes(&out.image, 0)?,
            ClassVolume::from_prob_planes(&out.probs, 0)?,
        ))
    }

    /// Backpropagates output gradients, accumulating parameter gradients.
    ///
    /// A `None` output gradient is treated as zero. Returns the input gradient when
    /// `need_input` is set.
    pub fn backward(
        &mut self,
        trace: &GeneratorTrace<T>,
        grad_image: Option<&Tensor<T>>,
        grad_probs: Option<&Tensor<T>>,
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let from_image = grad_image.map(|g| self.image_head.backward(&trace.image, g));
        let from_classes = grad_probs.map(|g| self.class_head.backward(&trace.classes, g));
        let mut g = match (from_image, from_classes) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b);
                a
            }
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => return None,
        };
        for (block, (ta, tb)) in self.res.iter_mut().zip(&trace.res).rev() {
            let inner = block.b.backward(tb, g.clone(), true, true).expect("input grad");
            let mut skip = block.a.backward(ta, inner, true, true).expect("input grad");
            skip.add_assign(&g);
            g = skip;
        }
        for (block, t) in self.down.iter_mut().zip(&trace.down).rev() {
            g = block.backward(t, g, true, true).expect("input grad");
        }
        self.stem.backward(&trace.stem, g, need_input, true)
    }
}

impl<T: Scalar> Decoder<T> {
    fn forward(&self, z: &Tensor<T>) -> (Tensor<T>, DecoderTrace<T>) {
        let mut h = z.clone();
        let mut ups = Vec::with_capacity(self.ups.len());
        for block in &self.ups {
            let (y, t) = block.forward(&h);
            ups.push(t);
            h = y;
        }
        let (logits, out) = self.out.forward(&h);
        let activated = match self.kind {
            HeadKind::Image => logits.map(|v| v.tanh()),
            HeadKind::Classes => softmax_channels(&logits),
        };
        (
            activated.clone(),
            DecoderTrace {
                ups,
                out,
                activated,
            },
        )
    }

    fn backward(&mut self, trace: &DecoderTrace<T>, grad: &Tensor<T>) -> Tensor<T> {
        let g = match self.kind {
            HeadKind::Image => {
                let mut g = grad.clone();
                for (gi, &y) in g.data_mut().iter_mut().zip(trace.activated.data()) {
                    *gi *= T::one() - y * y;
                }
                g
            }
            HeadKind::Classes => softmax_channels_backward(&trace.activated, grad),
        };
        let mut g = self.out.backward(&trace.out, g, true, true).expect("input grad");
        for (block, t) in self.ups.iter_mut().zip(&trace.ups).rev() {
            g = block.backward(t, g, true, true).expect("input grad");
        }
        g
    }
}

impl<T: Scalar> Parameters<T> for GeneratorModel<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        self.stem.params_into("stem", &mut out);
        for (i, b) in self.down.iter().enumerate() {
            b.params_into(&format!("down{i}"), &mut out);
        }
        for (i, r) in self.res.iter().enumerate() {
            r.a.params_into(&format!("res{i}.a"), &mut out);
            r.b.params_into(&format!("res{i}.b"), &mut out);
        }
        for (name, d) in [("image", &self.image_head), ("class", &self.class_head)] {
            for (i, b) in d.ups.iter().enumerate() {
                b.params_into(&format!("{name}.up{i}"), &mut out);
            }
            d.out.params_into(&format!("{name}.out"), &mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        self.stem.params_mut_into("stem", &mut out);
        for (i, b) in self.down.iter_mut().enumerate() {
            b.params_mut_into(&format!("down{i}"), &mut out);
        }
        for (i, r) in self.res.iter_mut().enumerate() {
            r.a.params_mut_into(&format!("res{i}.a"), &mut out);
            r.b.params_mut_into(&format!("res{i}.b"), &mut out);
        }
        for (name, d) in [("image", &mut self.image_head), ("class", &mut self.class_head)] {
            for (i, b) in d.ups.iter_mut().enumerate() {
                b.params_mut_into(&format!("{name}.up{i}"), &mut out);
            }
            d.out.params_mut_into(&format!("{name}.out"), &mut out);
        }
        out
    }
}
