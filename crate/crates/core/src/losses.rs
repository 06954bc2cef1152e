//! Objective terms for joint image/class-map translation.
//!
//! Every pixel-wise term is the mean over all pixel and channel entries, then over the batch.
//! Tensor-level functions return the loss together with its gradient and are what the
//! trainer uses; the pair-level functions wrap them for single samples.

use serde::{Deserialize, Serialize};

use crate::datamodel::{ClassMap, ClassVolume, LabeledPair, NormImage, PixelMask, VolumeMode};
use crate::error::{Error, Result};
use crate::network::{GeneratorModel, PatchDiscriminator};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Lower bound applied to probabilities before taking a logarithm.
pub const CE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// Object transfiguration: background preservation on, cross-domain label loss off.
    #[default]
    Transfiguration,
    /// Domain transfer: cross-domain label loss on, background preservation off.
    DomainTransfer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    #[default]
    LeastSquares,
    /// Sigmoid cross-entropy on logits; the generator uses the non-saturating `-log D(fake)`.
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
}

/// Coefficients of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub adv: f64,
    pub idt: f64,
    pub rec: f64,
    pub cls: f64,
    pub dom: f64,
    pub mode: TaskMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::for_mode(TaskMode::Transfiguration)
    }
}

impl LossWeights {
    /// Default coefficients with the term disabled by `mode` set to zero.
    pub fn for_mode(mode: TaskMode) -> Self {
        LossWeights {
            adv: 1.0,
            idt: 10.0,
            rec: 10.0,
            cls: 10.0,
            dom: 1.0,
            mode,
        }
        .with_mode_applied()
    }

    /// Zeroes the coefficient that `mode` turns off.
    pub fn with_mode_applied(mut self) -> Self {
        match self.mode {
            TaskMode::Transfiguration => self.dom = 0.0,
            TaskMode::DomainTransfer => self.cls = 0.0,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("adv", self.adv),
            ("idt", self.idt),
            ("rec", self.rec),
            ("cls", self.cls),
            ("dom", self.dom),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("loss weight {name} = {v} must be finite and >= 0")));
            }
        }
        match self.mode {
            TaskMode::Transfiguration if self.dom != 0.0 => Err(Error::Config(format!(
                "transfiguration mode requires dom = 0, got {}",
                self.dom
            ))),
            TaskMode::DomainTransfer if self.cls != 0.0 => Err(Error::Config(format!(
                "domain_transfer mode requires cls = 0, got {}",
                self.cls
            ))),
            _ => Ok(()),
        }
    }
}

/// Per-term values of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv_g: f64,
    pub adv_d: f64,
    pub idt: f64,
    pub rec: f64,
    pub cls: f64,
    pub dom: f64,
    pub total: f64,
}

impl LossReport {
    /// Named generator-side terms, in objective order.
    pub fn terms(&self) -> [(&'static str, f64); 6] {
        [
            ("adv_G", self.adv_g),
            ("adv_D", self.adv_d),
            ("idt", self.idt),
            ("rec", self.rec),
            ("cls", self.cls),
            ("dom", self.dom),
        ]
    }
}

/// Weighted sum of the five generator-side terms of `parts`.
pub fn total_generator_loss(w: &LossWeights, parts: &LossReport) -> Result<f64> {
    w.validate()?;
    Ok(w.adv * parts.adv_g + w.idt * parts.idt + w.rec * parts.rec + w.cls * parts.cls + w.dom * parts.dom)
}

/// Every class except background class 0.
pub fn default_foreground(classes: usize) -> Vec<u16> {
    (1..classes as u16).collect()
}

/// Pixels that are background in both maps.
pub fn pixel_indicator(c_src: &ClassMap, c_trans: &ClassMap, foreground: &[u16]) -> Result<PixelMask> {
    if (c_src.height(), c_src.width()) != (c_trans.height(), c_trans.width()) {
        return Err(Error::shape(format!(
            "pixel indicator maps are {}x{} and {}x{}",
            c_src.height(),
            c_src.width(),
            c_trans.height(),
            c_trans.width()
        )));
    }
    let mut is_fg = vec![false; c_src.classes().max(c_trans.classes())];
    for &f in foreground {
        if let Some(slot) = is_fg.get_mut(f as usize) {
            *slot = true;
        }
    }
    let mask = c_src
        .labels()
        .iter()
        .zip(c_trans.labels())
        .map(|(&a, &b)| u8::from(!is_fg[a as usize] && !is_fg[b as usize]))
        .collect();
    PixelMask::new(c_src.height(), c_src.width(), mask)
}

fn check_same(a: [usize; 4], b: [usize; 4], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Mean of `mask * |a - b|` over every entry, with the per-pixel `mask` (one `H*W` plane per
/// sample, concatenated) broadcast over channels. Returns the gradient with respect to `a`.
pub fn l1_with_grad<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, mask: Option<&[u8]>) -> Result<(T, Tensor<T>)> {
    check_same(a.shape(), b.shape(), "l1 operands")?;
    let hw = a.plane_len();
    if let Some(m) = mask {
        if m.len() != a.n() * hw {
            return Err(Error::shape(format!("mask has {} entries, expected {}", m.len(), a.n() * hw)));
        }
    }
    let inv = T::one() / T::lit(a.len() as f64);
    let mut grad = Tensor::zeros(a.shape());
    let mut total = T::zero();
    let planes = a.data().chunks(hw).zip(b.data().chunks(hw)).zip(grad.data_mut().chunks_mut(hw));
    for (idx, ((pa, pb), pg)) in planes.enumerate() {
        let n = idx / a.c();
        let m = mask.map(|m| &m[n * hw..(n + 1) * hw]);
        let mut acc = T::zero();
        for i in 0..hw {
            if m.is_some_and(|m| m[i] == 0) {
                continue;
            }
            let d = pa[i] - pb[i];
            acc += d.abs();
            pg[i] = if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            };
        }
        total += acc;
    }
    Ok((total * inv, grad))
}

/// Mean over pixels and samples of `-log(max(p[target], 1e-7))`, with the gradient with
/// respect to `probs`. `labels` holds one `H*W` map per sample, concatenated.
pub fn cross_entropy_with_grad<T: Scalar>(probs: &Tensor<T>, labels: &[u16]) -> Result<(T, Tensor<T>)> {
    let hw = probs.plane_len();
    let m = probs.c();
    if labels.len() != probs.n() * hw {
        return Err(Error::shape(format!(
            "{} labels for {} pixels",
            labels.len(),
            probs.n() * hw
        )));
    }
    let clamp = T::lit(CE_CLAMP);
    let count = T::lit((probs.n() * hw) as f64);
    let mut grad = Tensor::zeros(probs.shape());
    let mut total = T::zero();
    for n in 0..probs.n() {
        let p = probs.sample(n);
        let g = grad.sample_mut(n);
        for (i, &label) in labels[n * hw..(n + 1) * hw].iter().enumerate() {
            let c = label as usize;
            if c >= m {
                return Err(Error::ClassCount {
                    expected: m,
                    found: c + 1,
                });
            }
            let v = p[c * hw + i];
            if v > clamp {
                total += -v.ln();
                g[c * hw + i] = -T::one() / (v * count);
            } else {
                total += -clamp.ln();
            }
        }
    }
    Ok((total / count, grad))
}

/// Softplus `ln(1 + e^x)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Mean adversarial penalty of a logit grid pushed toward "real" (`real = true`) or "fake",
/// with its gradient with respect to the logits.
///
/// Least squares: `(x - t)^2` with `t` = 1 or 0. Log: `-log sigmoid(x)` toward real and
/// `-log(1 - sigmoid(x))` toward fake.
pub fn gan_with_grad<T: Scalar>(logits: &Tensor<T>, real: bool, mode: GanMode) -> (T, Tensor<T>) {
    let inv = T::one() / T::lit(logits.len() as f64);
    let mut total = T::zero();
    let mut grad = Tensor::zeros(logits.shape());
    for (g, &x) in grad.data_mut().iter_mut().zip(logits.data()) {
        match mode {
            GanMode::LeastSquares => {
                let d = if real { x - T::one() } else { x };
                total += d * d;
                *g = (d + d) * inv;
            }
            GanMode::Log if real => {
                total += softplus(-x);
                *g = (sigmoid(x) - T::one()) * inv;
            }
            GanMode::Log => {
                total += softplus(x);
                *g = sigmoid(x) * inv;
            }
        }
    }
    (total * inv, grad)
}

/// Adversarial loss of one discriminator on a real and a fake pair.
///
/// The generator role scores only the fake pair against the "real" target. The
/// discriminator role averages the real and fake penalties.
pub fn adversarial_loss<T: Scalar>(
    d: &PatchDiscriminator<T>,
    real: &LabeledPair<T>,
    fake: &LabeledPair<T>,
    role: Role,
    mode: GanMode,
) -> Result<T> {
    let fake_logits = d.score(fake)?;
    match role {
        Role::Generator => Ok(gan_with_grad(&fake_logits, true, mode).0),
        Role::Discriminator => {
            let real_logits = d.score(real)?;
            let (r, _) = gan_with_grad(&real_logits, true, mode);
            let (f, _) = gan_with_grad(&fake_logits, false, mode);
            Ok(T::lit(0.5) * (r + f))
        }
    }
}

/// Background-preservation term for one direction: mean of `P * |I_src - I_trans|` over all
/// `H*W*3` entries.
pub fn transfiguration_loss<T: Scalar>(i_src: &NormImage<T>, i_trans: &NormImage<T>, p: &PixelMask) -> Result<T> {
    if (p.height(), p.width()) != (i_src.height(), i_src.width()) {
        return Err(Error::shape("pixel mask does not match the image"));
    }
    let (v, _) = l1_with_grad(&i_trans.to_planes(), &i_src.to_planes(), Some(p.as_slice()))?;
    Ok(v)
}

fn volume_planes<T: Scalar>(v: &ClassVolume<T>) -> Tensor<T> {
    let (h, w, m) = (v.height(), v.width(), v.classes());
    let mut t = Tensor::zeros([1, m, h, w]);
    for (i, chunk) in v.values().chunks(m).enumerate() {
        for (c, &x) in chunk.iter().enumerate() {
            t.data_mut()[c * h * w + i] = x;
        }
    }
    t
}

/// Mean pixel cross-entropy of a simplex prediction against a label map.
pub fn class_cross_entropy<T: Scalar>(target: &ClassMap, predicted: &ClassVolume<T>) -> Result<T> {
    if predicted.mode() != VolumeMode::Simplex {
        return Err(Error::Mode("cross-entropy needs a simplex prediction".into()));
    }
    if (target.height(), target.width()) != (predicted.height(), predicted.width()) {
        return Err(Error::shape("class map and prediction sizes differ"));
    }
    if target.classes() != predicted.classes() {
        return Err(Error::ClassCount {
            expected: target.classes(),
            found: predicted.classes(),
        });
    }
    Ok(cross_entropy_with_grad(&volume_planes(predicted), target.labels())?.0)
}

/// Label map carried by a pair (argmax of its class planes, lowest index on ties).
pub fn pair_labels<T: Scalar>(pair: &LabeledPair<T>) -> ClassMap {
    let v = pair.classes();
    let m = v.classes();
    let labels = v
        .values()
        .chunks(m)
        .map(|px| {
            let mut best = 0;
            for c in 1..m {
                if px[c] > px[best] {
                    best = c;
                }
            }
            best as u16
        })
        .collect();
    ClassMap::new(v.height(), v.width(), m, labels).expect("argmax labels are in range")
}

/// Anything that maps a labeled pair to a translated image and simplex class volume.
pub trait Translator<T: Scalar> {
    fn translate_pair(&self, pair: &LabeledPair<T>) -> Result<(NormImage<T>, ClassVolume<T>)>;
}

impl<T: Scalar> Translator<T> for GeneratorModel<T> {
    fn translate_pair(&self, pair: &LabeledPair<T>) -> Result<(NormImage<T>, ClassVolume<T>)> {
        self.translate(pair)
    }
}

fn image_l1<T: Scalar>(a: &NormImage<T>, b: &NormImage<T>) -> Result<T> {
    Ok(l1_with_grad(&a.to_planes(), &b.to_planes(), None)?.0)
}

/// Identity term: each generator shown a pair from its own output domain should return it.
pub fn identity_loss<T: Scalar>(
    g_t2s: &dyn Translator<T>,
    g_s2t: &dyn Translator<T>,
    pair_s: &LabeledPair<T>,
    pair_t: &LabeledPair<T>,
) -> Result<T> {
    let mut total = T::zero();
    for (g, pair) in [(g_t2s, pair_s), (g_s2t, pair_t)] {
        let (img, cls) = g.translate_pair(pair)?;
        total += image_l1(&img, pair.image())? + class_cross_entropy(&pair_labels(pair), &cls)?;
    }
    Ok(total)
}

/// Cycle term: translating there and back must recover the image and the labels.
pub fn reconstruction_loss<T: Scalar>(
    g_s2t: &dyn Translator<T>,
    g_t2s: &dyn Translator<T>,
    pair_s: &LabeledPair<T>,
    pair_t: &LabeledPair<T>,
) -> Result<T> {
    let mut total = T::zero();
    for (fwd, back, pair) in [(g_s2t, g_t2s, pair_s), (g_t2s, g_s2t, pair_t)] {
        let (img, cls) = fwd.translate_pair(pair)?;
        let (rimg, rcls) = back.translate_pair(&LabeledPair::new(img, cls)?)?;
        total += image_l1(&rimg, pair.image())? + class_cross_entropy(&pair_labels(pair), &rcls)?;
    }
    Ok(total)
}

/// Cross-domain label term: translated class volumes should keep the source labels.
pub fn cross_domain_loss<T: Scalar>(
    pair_s: &LabeledPair<T>,
    translated_s: &ClassVolume<T>,
    pair_t: &LabeledPair<T>,
    translated_t: &ClassVolume<T>,
) -> Result<T> {
    Ok(class_cross_entropy(&pair_labels(pair_s), translated_s)?
        + class_cross_entropy(&pair_labels(pair_t), translated_t)?)
}
