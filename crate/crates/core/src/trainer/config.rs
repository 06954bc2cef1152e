use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{GanMode, LossWeights};
use crate::network::{DiscriminatorConfig, GeneratorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Full rate for the first half of training, then linear decay to zero at the last epoch.
    LinearDecayAfterHalf,
}

impl LrSchedule {
    /// Multiplier on the base rate during 1-based `epoch` of `total`.
    pub fn factor(self, epoch: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::LinearDecayAfterHalf => {
                let half = total as f64 / 2.0;
                if half <= 0.0 {
                    return 1.0;
                }
                ((total as f64 - epoch as f64) / half).clamp(0.0, 1.0)
            }
        }
    }
}

/// Hyper-parameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Class count `M` shared by both domains.
    pub classes: usize,
    /// Side length of the square training images.
    pub image_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    /// Adam first-moment decay.
    pub beta1: f64,
    pub beta2: f64,
    pub weights: LossWeights,
    pub gan_mode: GanMode,
    pub history_capacity: usize,
    /// Foreground classes of the background-preservation mask; `None` means every class but 0.
    pub foreground: Option<Vec<u16>>,
    pub seed: u64,
    /// Save a checkpoint after every this many epochs (and after the last one).
    pub checkpoint_every: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    /// Two classes, with generator and discriminator inheriting the class count.
    fn default() -> Self {
        let mut cfg = TrainConfig::new(2);
        cfg.generator.classes = 0;
        cfg.discriminator.classes = 0;
        cfg
    }
}

impl TrainConfig {
    pub fn new(classes: usize) -> Self {
        TrainConfig {
            classes,
            image_size: 128,
            epochs: 200,
            batch_size: 1,
            learning_rate: 2e-4,
            lr_schedule: LrSchedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            weights: LossWeights::default(),
            gan_mode: GanMode::LeastSquares,
            history_capacity: 50,
            foreground: None,
            seed: 0,
            checkpoint_every: 10,
            generator: GeneratorConfig::new(classes),
            discriminator: DiscriminatorConfig::new(classes),
        }
    }

    /// Fills inherited class counts, applies the small-input block rule, and validates.
    pub fn resolved(&self) -> Result<TrainConfig> {
        let mut cfg = self.clone();
        for (what, c) in [
            ("generator", &mut cfg.generator.classes),
            ("discriminator", &mut cfg.discriminator.classes),
        ] {
            if *c == 0 {
                *c = self.classes;
            } else if *c != self.classes {
                return Err(Error::Config(format!(
                    "{what}.classes = {c} disagrees with classes = {}",
                    self.classes
                )));
            }
        }
        cfg.generator = cfg.generator.resolved_for(cfg.image_size);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.classes < 2 {
            return bad("classes", format!("{} < 2", self.classes));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate", format!("{} must be finite and >= 0", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(name, format!("{b} outside [0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every", "must be >= 1".into());
        }
        if self.image_size < 8 || !self.image_size.is_multiple_of(4) {
            return bad("image_size", format!("{} must be >= 8 and divisible by 4", self.image_size));
        }
        if let Some(fg) = &self.foreground {
            if let Some(&c) = fg.iter().find(|&&c| c as usize >= self.classes) {
                return bad("foreground", format!("class {c} >= classes {}", self.classes));
            }
        }
        self.weights.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.discriminator.output_size(self.image_size, self.image_size).is_none() {
            return bad(
                "discriminator",
                format!("{} downsampling layers are too many for {}px images", self.discriminator.downsampling_layers, self.image_size),
            );
        }
        Ok(())
    }

    pub fn foreground_classes(&self) -> Vec<u16> {
        self.foreground
            .clone()
            .unwrap_or_else(|| crate::losses::default_foreground(self.classes))
    }
}
