use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::default_init_std;
use crate::datamodel::{concat_pair, LabeledPair};
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv2d, ConvBlock, ConvBlockTrace, Padding, Param, Parameters};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const KERNEL: usize = 4;
const SLOPE: f64 = 0.2;

/// Layout of a [`PatchDiscriminator`].
///
/// The default (`base_channels = 64`, `downsampling_layers = 3`) gives the 70x70 patch critic:
/// convs of widths 64, 128, 256, 512 with strides 2, 2, 2, 1, then a 1-channel logit conv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Class count `M`; 0 inherits the training configuration's value.
    #[serde(default)]
    pub classes: usize,
    #[serde(default = "default_base")]
    pub base_channels: usize,
    #[serde(default = "default_layers")]
    pub downsampling_layers: usize,
    /// Instance normalization after every conv except the first and the last.
    #[serde(default = "default_norm")]
    pub instance_norm: bool,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_base() -> usize {
    64
}
fn default_layers() -> usize {
    3
}
fn default_norm() -> bool {
    true
}

impl DiscriminatorConfig {
    pub fn new(classes: usize) -> Self {
        DiscriminatorConfig {
            classes,
            base_channels: default_base(),
            downsampling_layers: default_layers(),
            instance_norm: true,
            init_std: default_init_std(),
        }
    }

    pub fn with_base_channels(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("discriminator classes {} < 2", self.classes)));
        }
        if self.base_channels == 0 || self.downsampling_layers == 0 {
            return Err(Error::Config(
                "discriminator needs base_channels and downsampling_layers >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Channel widths of the hidden convs.
    pub fn widths(&self) -> Vec<usize> {
        let cap = 8 * self.base_channels;
        (0..=self.downsampling_layers)
            .map(|i| (self.base_channels << i.min(3)).min(cap))
            .collect()
    }

    /// Spatial size of the logit grid, if the input is large enough.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let step = |v: usize, stride: usize| {
            let padded = v + 2;
            (padded >= KERNEL).then(|| (padded - KERNEL) / stride + 1)
        };
        let (mut h, mut w) = (h, w);
        for _ in 0..self.downsampling_layers {
            h = step(h, 2)?;
            w = step(w, 2)?;
        }
        for _ in 0..2 {
            h = step(h, 1)?;
            w = step(w, 1)?;
        }
        Some((h, w))
    }
}

/// Fully-convolutional critic over `(3 + M)`-channel pair stacks.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator<T> {
    cfg: DiscriminatorConfig,
    layers: Vec<ConvBlock<T>>,
}

/// Saved activations of one [`PatchDiscriminator::forward`] call.
#[derive(Clone, Debug)]
pub struct DiscriminatorTrace<T> {
    layers: Vec<ConvBlockTrace<T>>,
}

impl<T: Scalar> PatchDiscriminator<T> {
    pub fn new(cfg: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = cfg.widths();
        let act = Activation::LeakyRelu(SLOPE);
        let mut layers = Vec::with_capacity(widths.len() + 1);
        let mut cin = 3 + cfg.classes;
        for (i, &cout) in widths.iter().enumerate() {
            let stride = if i < cfg.downsampling_layers { 2 } else { 1 };
            let conv = Conv2d::new(cin, cout, KERNEL, stride, 1, Padding::Zeros, cfg.init_std, &mut rng);
            layers.push(ConvBlock::new(conv, false, cfg.instance_norm && i > 0, act));
            cin = cout;
        }
        let conv = Conv2d::new(cin, 1, KERNEL, 1, 1, Padding::Zeros, cfg.init_std, &mut rng);
        layers.push(ConvBlock::new(conv, false, false, Activation::Identity));
        Ok(PatchDiscriminator {
            cfg: cfg.clone(),
            layers,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn num_classes(&self) -> usize {
        self.cfg.classes
    }

    /// Patch logits `[N, 1, h, w]` for a `[N, 3 + M, H, W]` stack.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DiscriminatorTrace<T>)> {
        if x.c() != 3 + self.cfg.classes {
            return Err(Error::ClassCount {
                expected: self.cfg.classes,
                found: x.c().saturating_sub(3),
            });
        }
        if self.cfg.output_size(x.h(), x.w()).is_none() {
            return Err(Error::shape(format!(
                "discriminator input {}x{} is too small",
                x.h(),
                x.w()
            )));
        }
        let mut h = x.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, t) = layer.forward(&h);
            traces.push(t);
            h = y;
        }
        Ok((h, DiscriminatorTrace { layers: traces }))
    }

    /// Patch logit grid for one labeled pair.
    pub fn score(&self, pair: &LabeledPair<T>) -> Result<Tensor<T>> {
        if pair.num_classes() != self.cfg.classes {
            return Err(Error::ClassCount {
                expected: self.cfg.classes,
                found: pair.num_classes(),
            });
        }
        Ok(self.forward(&concat_pair(pair)?)?.0)
    }

    /// Backpropagates a logit gradient. Parameter gradients accumulate only when
    /// `need_params`; the input gradient is returned when `need_input`.
    pub fn backward(
        &mut self,
        trace: &DiscriminatorTrace<T>,
        grad: &Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> Option<Tensor<T>> {
        let mut g = grad.clone();
        let last = self.layers.len() - 1;
        for (i, (layer, t)) in self.layers.iter_mut().zip(&trace.layers).enumerate().rev() {
            let want_input = i > 0 || need_input;
            match layer.backward(t, g, want_input, need_params) {
                Some(next) => g = next,
                None => {
                    debug_assert!(i == 0 || i == last);
                    return None;
                }
            }
        }
        Some(g)
    }
}

impl<T: Scalar> Parameters<T> for PatchDiscriminator<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.params_into(&format!("conv{i}"), &mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.params_mut_into(&format!("conv{i}"), &mut out);
        }
        out
    }
}
