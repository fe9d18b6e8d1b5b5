//! Training recipe: schedules, augmentation, Adam, weight averaging and
//! ensembling, and the epoch loop.

mod aggregate;
mod augment;
mod optim;
mod run;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AstConfig;
use crate::tensor::tape::bce_value;
use crate::tensor::{Real, Tensor};

pub use aggregate::{ensemble_predict, weight_average, WeightAverager};
pub use augment::{balanced_weights, mix_pair, mixup, spec_mask, MaskRecord, MixRecord};
pub use optim::{adam_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use run::{
    batch_gradients, evaluate_params, predict_batch, train, Dataset, EpochRecord, TrainOutcome,
};

/// Learning-rate decay rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Halve every `every` epochs once past epoch `after`.
    HalveEveryKAfterM { every: usize, after: usize },
    /// Multiply by `factor` every epoch once past epoch `after`.
    GeometricDecay { factor: f64, after: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    Ce,
}

/// Which epochs enter the weight-averaged model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "epochs", rename_all = "snake_case")]
pub enum Averaging {
    /// The final epoch's weights, unaveraged.
    Off,
    All,
    /// The last `n` epochs.
    Last(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub schedule: Schedule,
    /// Fraction of each batch that is mixed.
    pub mixup_ratio: f64,
    /// Beta(α, α) parameter for the mixing weight.
    pub mixup_alpha: f64,
    pub time_mask_max: usize,
    pub freq_mask_max: usize,
    pub balanced_sampling: bool,
    pub loss: LossKind,
    pub averaging: Averaging,
    pub seed: u64,
}

/// Time mask width of the 10 s recipe, scaled to `frames`.
pub fn scaled_time_mask(frames: usize) -> usize {
    192 * frames / 1024
}

impl TrainConfig {
    /// Balanced AudioSet: 25 epochs from 5e-5, halved every 5 after epoch 10.
    pub fn balanced_audioset() -> Self {
        TrainConfig {
            batch_size: 12,
            epochs: 25,
            initial_lr: 5e-5,
            schedule: Schedule::HalveEveryKAfterM { every: 5, after: 10 },
            mixup_ratio: 0.5,
            mixup_alpha: 10.0,
            time_mask_max: 192,
            freq_mask_max: 48,
            balanced_sampling: false,
            loss: LossKind::Bce,
            averaging: Averaging::Last(20),
            seed: 0,
        }
    }

    /// Full AudioSet: 5 epochs from 1e-5, halved every epoch after epoch 2.
    pub fn full_audioset() -> Self {
        TrainConfig {
            epochs: 5,
            initial_lr: 1e-5,
            schedule: Schedule::HalveEveryKAfterM { every: 1, after: 2 },
            balanced_sampling: true,
            averaging: Averaging::All,
            ..Self::balanced_audioset()
        }
    }

    /// ESC-like: 5 s input, 20 epochs from 1e-4, ×0.85 per epoch after epoch 5.
    pub fn esc() -> Self {
        TrainConfig {
            batch_size: 48,
            epochs: 20,
            initial_lr: 1e-4,
            schedule: Schedule::GeometricDecay { factor: 0.85, after: 5 },
            mixup_ratio: 0.0,
            mixup_alpha: 10.0,
            time_mask_max: scaled_time_mask(512),
            freq_mask_max: 48,
            balanced_sampling: false,
            loss: LossKind::Ce,
            averaging: Averaging::Off,
            seed: 0,
        }
    }

    /// Speech-command-like: 1 s input, 20 epochs from 2.5e-4, ×0.85 after epoch 5.
    pub fn speech_commands() -> Self {
        TrainConfig {
            batch_size: 128,
            initial_lr: 2.5e-4,
            mixup_ratio: 0.5,
            time_mask_max: scaled_time_mask(128),
            ..Self::esc()
        }
    }

    pub fn validate(&self, model: &AstConfig) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return fail(format!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if !(0.0..=1.0).contains(&self.mixup_ratio) {
            return fail(format!("mixup_ratio must lie in [0, 1], got {}", self.mixup_ratio));
        }
        if self.mixup_ratio > 0.0 && (self.mixup_alpha.is_nan() || self.mixup_alpha <= 0.0) {
            return fail(format!("mixup_alpha must be positive, got {}", self.mixup_alpha));
        }
        if self.time_mask_max > model.target_frames {
            return fail(format!(
                "time_mask_max {} exceeds {} frames",
                self.time_mask_max, model.target_frames
            ));
        }
        if self.freq_mask_max > model.n_mels {
            return fail(format!(
                "freq_mask_max {} exceeds {} bins",
                self.freq_mask_max, model.n_mels
            ));
        }
        match self.schedule {
            Schedule::HalveEveryKAfterM { every: 0, .. } => {
                return fail("halving interval must be at least 1".into())
            }
            Schedule::GeometricDecay { factor, .. } if !(factor > 0.0 && factor <= 1.0) => {
                return fail(format!("decay factor must lie in (0, 1], got {factor}"))
            }
            _ => {}
        }
        if let Averaging::Last(0) = self.averaging {
            return fail("averaging window must be at least 1 epoch".into());
        }
        let model_loss = if model.multi_label { LossKind::Bce } else { LossKind::Ce };
        if self.loss != model_loss {
            return fail(format!(
                "loss {:?} disagrees with multi_label = {}",
                self.loss, model.multi_label
            ));
        }
        Ok(())
    }

    /// Whether `epoch` (1-based) contributes to the averaged model.
    pub fn averages_epoch(&self, epoch: usize) -> bool {
        match self.averaging {
            Averaging::Off => epoch == self.epochs,
            Averaging::All => true,
            Averaging::Last(n) => epoch + n > self.epochs,
        }
    }
}

/// Learning rate for 1-based `epoch`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let (factor, steps) = match config.schedule {
        Schedule::Constant => (1.0, 0),
        Schedule::HalveEveryKAfterM { every, after } => {
            (0.5, if epoch <= after { 0 } else { (epoch - after - 1) / every + 1 })
        }
        Schedule::GeometricDecay { factor, after } => (factor, epoch.saturating_sub(after)),
    };
    // Applied one step at a time, as a stepping scheduler would.
    (0..steps).fold(config.initial_lr, |lr, _| lr * factor)
}

/// Mean BCE over a `B × C` batch with probabilities clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss<T: Real>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<T> {
    if probs.shape() != targets.shape() {
        return Err(Error::dim("bce_loss", probs.shape(), targets.shape()));
    }
    Ok(bce_value(probs.data(), targets.data()))
}
