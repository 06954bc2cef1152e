//! Alternating optimization of both generator/discriminator pairs.

mod adam;
mod checkpoint;
mod config;
mod fit;
mod history;

pub use adam::Adam;
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{LrSchedule, TrainConfig};
pub use fit::{fit, permutation, FitSummary, LOG_HEADER};
pub use history::HistoryBuffer;

use crate::datamodel::{concat_pair, LabeledPair};
use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy_with_grad, gan_with_grad, l1_with_grad, pair_labels, GanMode, LossReport, LossWeights,
};
use crate::network::{GeneratorModel, PatchDiscriminator, Translation};
use crate::nn::Parameters;
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// Stacked pair tensors `[N, 3 + M, H, W]` with their label maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    stack: Tensor<T>,
    labels: Vec<u16>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(stack: Tensor<T>, labels: Vec<u16>) -> Result<Self> {
        if stack.c() < 5 {
            return Err(Error::shape(format!("pair stack has {} channels", stack.c())));
        }
        if labels.len() != stack.n() * stack.plane_len() {
            return Err(Error::shape("label count does not match the stack"));
        }
        let m = stack.c() - 3;
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= m) {
            return Err(Error::ClassCount {
                expected: m,
                found: l as usize + 1,
            });
        }
        Ok(Batch { stack, labels })
    }

    pub fn from_pair(pair: &LabeledPair<T>) -> Result<Self> {
        Ok(Batch {
            stack: concat_pair(pair)?,
            labels: pair_labels(pair).labels().to_vec(),
        })
    }

    pub fn concat(parts: &[&Batch<T>]) -> Result<Self> {
        let stacks: Vec<Tensor<T>> = parts.iter().map(|b| b.stack.clone()).collect();
        Ok(Batch {
            stack: Tensor::stack(&stacks)?,
            labels: parts.iter().flat_map(|b| b.labels.iter().copied()).collect(),
        })
    }

    pub fn stack(&self) -> &Tensor<T> {
        &self.stack
    }
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
    pub fn len(&self) -> usize {
        self.stack.n()
    }
    pub fn is_empty(&self) -> bool {
        self.stack.n() == 0
    }
    pub fn classes(&self) -> usize {
        self.stack.c() - 3
    }
    fn image(&self) -> Tensor<T> {
        self.stack.split_channels(3).0
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    config: TrainConfig,
    g_s2t: GeneratorModel<T>,
    g_t2s: GeneratorModel<T>,
    d_s: PatchDiscriminator<T>,
    d_t: PatchDiscriminator<T>,
    opt_g_s2t: Adam<T>,
    opt_g_t2s: Adam<T>,
    opt_d_s: Adam<T>,
    opt_d_t: Adam<T>,
    history_s: HistoryBuffer<Tensor<T>>,
    history_t: HistoryBuffer<Tensor<T>>,
    /// Completed epochs.
    epoch: usize,
    /// Completed steps.
    step: u64,
}

/// Generator-side values of one forward pass, before any update.
#[derive(Clone, Debug)]
pub struct GeneratorPass<T> {
    pub report: LossReport,
    /// Packed translation of the source batch (fake target pairs).
    pub fake_t: Tensor<T>,
    /// Packed translation of the target batch (fake source pairs).
    pub fake_s: Tensor<T>,
}

struct Terms<T> {
    adv: T,
    idt: T,
    rec: T,
    cls: T,
    dom: T,
    fake: Tensor<T>,
}

struct Objective<'a> {
    weights: &'a LossWeights,
    gan: GanMode,
    is_fg: &'a [bool],
    backprop: bool,
}

fn scaled<T: Scalar>(mut t: Tensor<T>, k: f64) -> Tensor<T> {
    t.scale(T::lit(k));
    t
}

fn add_into<T: Scalar>(acc: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match acc {
        Some(a) => a.add_assign(&g),
        None => *acc = Some(g),
    }
}

/// Pixels that are background both in `labels` and in the argmax of `probs`.
fn background_mask<T: Scalar>(labels: &[u16], probs: &Tensor<T>, is_fg: &[bool]) -> Vec<u8> {
    let hw = probs.plane_len();
    let m = probs.c();
    let mut mask = Vec::with_capacity(labels.len());
    for n in 0..probs.n() {
        let p = probs.sample(n);
        for i in 0..hw {
            let mut best = 0;
            for c in 1..m {
                if p[c * hw + i] > p[best * hw + i] {
                    best = c;
                }
            }
            let src = labels[n * hw + i] as usize;
            mask.push(u8::from(!is_fg[src] && !is_fg[best]));
        }
    }
    mask
}

/// Terms of one translation direction; `fwd` maps the source domain to the other one and
/// `back` is the reverse generator. Gradients accumulate into both when back-propagating.
fn direction<T: Scalar>(
    fwd: &mut GeneratorModel<T>,
    back: &mut GeneratorModel<T>,
    critic: &mut PatchDiscriminator<T>,
    src: &Batch<T>,
    obj: &Objective<'_>,
) -> Result<Terms<T>> {
    let w = obj.weights;
    let zero = T::zero();
    let src_image = src.image();
    let (fake, fake_trace) = fwd.forward(&src.stack)?;
    let packed = fake.packed();
    let mut g_img: Option<Tensor<T>> = None;
    let mut g_prob: Option<Tensor<T>> = None;

    let mut adv = zero;
    if w.adv > 0.0 {
        let (logits, trace) = critic.forward(&packed)?;
        let (v, g) = gan_with_grad(&logits, true, obj.gan);
        adv = v;
        if obj.backprop {
            let dx = critic.backward(&trace, &scaled(g, w.adv), true, false).expect("input grad");
            let (gi, gp) = Translation::unpack_grad(&dx);
            add_into(&mut g_img, gi);
            add_into(&mut g_prob, gp);
        }
    }

    let mut cls = zero;
    if w.cls > 0.0 {
        let mask = background_mask(&src.labels, &fake.probs, obj.is_fg);
        let (v, g) = l1_with_grad(&fake.image, &src_image, Some(&mask))?;
        cls = v;
        if obj.backprop {
            add_into(&mut g_img, scaled(g, w.cls));
        }
    }

    let mut dom = zero;
    if w.dom > 0.0 {
        let (v, g) = cross_entropy_with_grad(&fake.probs, &src.labels)?;
        dom = v;
        if obj.backprop {
            add_into(&mut g_prob, scaled(g, w.dom));
        }
    }

    let mut rec = zero;
    if w.rec > 0.0 {
        let (cycled, trace) = back.forward(&packed)?;
        let (vi, gi) = l1_with_grad(&cycled.image, &src_image, None)?;
        let (vc, gc) = cross_entropy_with_grad(&cycled.probs, &src.labels)?;
        rec = vi + vc;
        if obj.backprop {
            let dx = back
                .backward(&trace, Some(&scaled(gi, w.rec)), Some(&scaled(gc, w.rec)), true)
                .expect("input grad");
            let (gi, gp) = Translation::unpack_grad(&dx);
            add_into(&mut g_img, gi);
            add_into(&mut g_prob, gp);
        }
    }

    let mut idt = zero;
    if w.idt > 0.0 {
        let (same, trace) = back.forward(&src.stack)?;
        let (vi, gi) = l1_with_grad(&same.image, &src_image, None)?;
        let (vc, gc) = cross_entropy_with_grad(&same.probs, &src.labels)?;
        idt = vi + vc;
        if obj.backprop {
            back.backward(&trace, Some(&scaled(gi, w.idt)), Some(&scaled(gc, w.idt)), false);
        }
    }

    if obj.backprop {
        fwd.backward(&fake_trace, g_img.as_ref(), g_prob.as_ref(), false);
    }
    Ok(Terms {
        adv,
        idt,
        rec,
        cls,
        dom,
        fake: packed,
    })
}

impl<T: Scalar> TrainState<T> {
    /// Fresh state with every network initialized from `config.seed`.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let cfg = config.resolved()?;
        let seed = cfg.seed;
        let g_s2t = GeneratorModel::new(&cfg.generator, derive_seed(&[seed, 0]))?;
        let g_t2s = GeneratorModel::new(&cfg.generator, derive_seed(&[seed, 1]))?;
        let d_s = PatchDiscriminator::new(&cfg.discriminator, derive_seed(&[seed, 2]))?;
        let d_t = PatchDiscriminator::new(&cfg.discriminator, derive_seed(&[seed, 3]))?;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        Ok(TrainState {
            opt_g_s2t: Adam::new(&g_s2t, b1, b2),
            opt_g_t2s: Adam::new(&g_t2s, b1, b2),
            opt_d_s: Adam::new(&d_s, b1, b2),
            opt_d_t: Adam::new(&d_t, b1, b2),
            history_s: HistoryBuffer::new(cfg.history_capacity, derive_seed(&[seed, 10])),
            history_t: HistoryBuffer::new(cfg.history_capacity, derive_seed(&[seed, 11])),
            g_s2t,
            g_t2s,
            d_s,
            d_t,
            epoch: 0,
            step: 0,
            config: cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }
    pub fn epoch(&self) -> usize {
        self.epoch
    }
    pub fn step(&self) -> u64 {
        self.step
    }
    pub fn g_s2t(&self) -> &GeneratorModel<T> {
        &self.g_s2t
    }
    pub fn g_t2s(&self) -> &GeneratorModel<T> {
        &self.g_t2s
    }
    pub fn d_s(&self) -> &PatchDiscriminator<T> {
        &self.d_s
    }
    pub fn d_t(&self) -> &PatchDiscriminator<T> {
        &self.d_t
    }
    pub fn history_s(&self) -> &HistoryBuffer<Tensor<T>> {
        &self.history_s
    }
    pub fn history_t(&self) -> &HistoryBuffer<Tensor<T>> {
        &self.history_t
    }

    /// Mutable access to the generators, e.g. for perturbation tests.
    pub fn generators_mut(&mut self) -> (&mut GeneratorModel<T>, &mut GeneratorModel<T>) {
        (&mut self.g_s2t, &mut self.g_t2s)
    }

    /// Learning rate in effect for the next step.
    pub fn current_lr(&self) -> f64 {
        self.config.learning_rate * self.config.lr_schedule.factor(self.epoch + 1, self.config.epochs)
    }

    fn check_batch(&self, b: &Batch<T>, what: &str) -> Result<()> {
        if b.classes() != self.config.classes {
            return Err(Error::ClassCount {
                expected: self.config.classes,
                found: b.classes(),
            });
        }
        let side = self.config.image_size;
        if b.is_empty() || b.stack.h() != side || b.stack.w() != side {
            return Err(Error::shape(format!(
                "{what} batch is {:?}, expected {side}x{side} images",
                b.stack.shape()
            )));
        }
        Ok(())
    }

    /// Evaluates the weighted generator objective on a pair of batches. With `backprop`,
    /// generator gradients are reset and then filled; parameters are never changed.
    pub fn generator_objective(&mut self, s: &Batch<T>, t: &Batch<T>, backprop: bool) -> Result<GeneratorPass<T>> {
        self.check_batch(s, "source")?;
        self.check_batch(t, "target")?;
        let mut is_fg = vec![false; self.config.classes];
        for c in self.config.foreground_classes() {
            is_fg[c as usize] = true;
        }
        let obj = Objective {
            weights: &self.config.weights,
            gan: self.config.gan_mode,
            is_fg: &is_fg,
            backprop,
        };
        if backprop {
            self.g_s2t.zero_grad();
            self.g_t2s.zero_grad();
        }
        let a = direction(&mut self.g_s2t, &mut self.g_t2s, &mut self.d_t, s, &obj)?;
        let b = direction(&mut self.g_t2s, &mut self.g_s2t, &mut self.d_s, t, &obj)?;
        let w = &self.config.weights;
        let mut report = LossReport {
            adv_g: (a.adv + b.adv).as_f64(),
            adv_d: 0.0,
            idt: (a.idt + b.idt).as_f64(),
            rec: (a.rec + b.rec).as_f64(),
            cls: (a.cls + b.cls).as_f64(),
            dom: (a.dom + b.dom).as_f64(),
            total: 0.0,
        };
        report.total =
            w.adv * report.adv_g + w.idt * report.idt + w.rec * report.rec + w.cls * report.cls + w.dom * report.dom;
        Ok(GeneratorPass {
            report,
            fake_t: a.fake,
            fake_s: b.fake,
        })
    }

    fn check_finite(&self, report: &LossReport) -> Result<()> {
        for (term, value) in report.terms().into_iter().chain([("total", report.total)]) {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    term,
                    value,
                    step: self.step,
                });
            }
        }
        Ok(())
    }

    /// Generator half-step: evaluates the objective and applies one Adam update to both
    /// generators. Discriminators are read but never modified.
    pub fn generator_update(&mut self, s: &Batch<T>, t: &Batch<T>) -> Result<GeneratorPass<T>> {
        let lr = self.current_lr();
        let pass = self.generator_objective(s, t, true)?;
        self.check_finite(&pass.report)?;
        self.opt_g_s2t.step(&mut self.g_s2t, lr);
        self.opt_g_t2s.step(&mut self.g_t2s, lr);
        Ok(pass)
    }

    /// Discriminator half-step on real batches and history-pooled fakes of `pass`. Returns
    /// the summed discriminator loss; generators are never modified.
    pub fn discriminator_update(&mut self, s: &Batch<T>, t: &Batch<T>, pass: GeneratorPass<T>) -> Result<f64> {
        let lr = self.current_lr();
        let mode = self.config.gan_mode;
        let loss_t = discriminator_step(&mut self.d_t, &mut self.opt_d_t, &mut self.history_t, &t.stack, pass.fake_t, mode, lr)?;
        let loss_s = discriminator_step(&mut self.d_s, &mut self.opt_d_s, &mut self.history_s, &s.stack, pass.fake_s, mode, lr)?;
        Ok((loss_s + loss_t).as_f64())
    }

    /// One generator update followed by one discriminator update.
    pub fn train_step(&mut self, s: &Batch<T>, t: &Batch<T>) -> Result<LossReport> {
        let pass = self.generator_update(s, t)?;
        let mut report = pass.report;
        report.adv_d = self.discriminator_update(s, t, pass)?;
        self.check_finite(&report)?;
        self.step += 1;
        Ok(report)
    }
}

fn discriminator_step<T: Scalar>(
    critic: &mut PatchDiscriminator<T>,
    opt: &mut Adam<T>,
    history: &mut HistoryBuffer<Tensor<T>>,
    real: &Tensor<T>,
    fake: Tensor<T>,
    mode: GanMode,
    lr: f64,
) -> Result<T> {
    let pooled: Vec<Tensor<T>> = (0..fake.n()).map(|n| history.sample(fake.sample_tensor(n))).collect();
    let pooled = Tensor::stack(&pooled)?;
    critic.zero_grad();
    let (real_logits, real_trace) = critic.forward(real)?;
    let (fake_logits, fake_trace) = critic.forward(&pooled)?;
    let (lr_, gr) = gan_with_grad(&real_logits, true, mode);
    let (lf, gf) = gan_with_grad(&fake_logits, false, mode);
    critic.backward(&real_trace, &scaled(gr, 0.5), false, true);
    critic.backward(&fake_trace, &scaled(gf, 0.5), false, true);
    opt.step(critic, lr);
    Ok(T::lit(0.5) * (lr_ + lf))
}
