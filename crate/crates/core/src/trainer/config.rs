use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::dtm::DEFAULT_TAU;
use crate::error::{Error, Result};
use crate::mi::{MiObjective, MiOptions};

/// Source of proxy labels for unlabeled samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guesser {
    /// Template matching against the feature pool.
    Dtm,
    /// Arg-max of the weak-view prediction when its probability reaches a threshold.
    Confidence,
    /// No proxy labels; the unlabeled cross-entropy term vanishes.
    None,
}

/// Denominator of the unlabeled cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnlabeledNorm {
    /// Number of samples that received a proxy label.
    Valid,
    /// Full unlabeled batch size.
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// `lr·cos(7πt / 16T)` over the whole run.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the triplet mutual-information loss.
    pub alpha: f64,
    /// Cosine threshold for template matching.
    pub tau: f64,
    pub lr: f64,
    /// Heavy-ball momentum; 0 gives plain gradient descent.
    pub momentum: f64,
    /// Labeled samples per step.
    pub batch_size: usize,
    /// Unlabeled samples per labeled sample in a step.
    pub mu: usize,
    pub epochs: usize,
    /// First epoch (0-based) in which the mutual-information term is active.
    pub tmi_onset: usize,
    pub ema_decay: f64,
    /// Use `min(decay, (1+t)/(10+t))` at step `t` so short runs are not
    /// dominated by the initial weights.
    pub ema_warmup: bool,
    pub seed: u64,
    pub guesser: Guesser,
    pub confidence_threshold: f64,
    pub unlabeled_norm: UnlabeledNorm,
    pub lr_schedule: LrSchedule,
    pub mi: MiOptions,
    /// Harvest top-confidence unlabeled samples into the feature pool each epoch.
    pub memory_bank: bool,
    /// Also train on harvested samples' pseudo-classes in the unlabeled cross-entropy.
    pub harvest_in_loss: bool,
    /// Queue length per class; `None` means five times the labels per class.
    pub pool_capacity: Option<usize>,
    /// Memory bank row length; `None` means twice the labels per class.
    pub bank_k: Option<usize>,
    /// Forward only the labeled strong views; the supervised baseline.
    pub labeled_only: bool,
    /// Fixed number of steps per epoch; `None` means one pass over the
    /// unlabeled set. The unlabeled order is reshuffled whenever it runs out.
    pub steps_per_epoch: Option<usize>,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            tau: DEFAULT_TAU,
            lr: 0.03,
            momentum: 0.0,
            batch_size: 8,
            mu: 7,
            epochs: 50,
            tmi_onset: 5,
            ema_decay: 0.999,
            ema_warmup: true,
            seed: 0,
            guesser: Guesser::Dtm,
            confidence_threshold: 0.95,
            unlabeled_norm: UnlabeledNorm::Valid,
            lr_schedule: LrSchedule::Constant,
            mi: MiOptions::default(),
            memory_bank: true,
            harvest_in_loss: false,
            pool_capacity: None,
            bank_k: None,
            labeled_only: false,
            steps_per_epoch: None,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Labeled-only baseline: no mutual information and no proxy labels.
    pub fn supervised(&self) -> Self {
        TrainConfig {
            alpha: 0.0,
            guesser: Guesser::None,
            labeled_only: true,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if !(self.alpha >= 0.0) {
            return fail(format!("alpha must be ≥ 0, got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail(format!("tau must be in (0, 1), got {}", self.tau));
        }
        if !(self.lr > 0.0) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 || self.mu == 0 {
            return fail("batch_size and mu must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return fail(format!("ema_decay must be in [0, 1], got {}", self.ema_decay));
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return fail(format!("confidence_threshold must be in (0, 1], got {}", self.confidence_threshold));
        }
        if self.steps_per_epoch == Some(0) {
            return fail("steps_per_epoch must be ≥ 1".into());
        }
        if self.pool_capacity == Some(0) {
            return fail("pool_capacity must be ≥ 1".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let frac = step as f64 / total_steps.max(1) as f64;
                self.lr * (7.0 * std::f64::consts::PI * frac / 16.0).cos()
            }
        }
    }
}

/// Settings of a purely unsupervised run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnsupervisedConfig {
    pub objective: MiObjective,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub ema_decay: f64,
    pub ema_warmup: bool,
    pub seed: u64,
    pub mi: MiOptions,
    pub augment: AugmentConfig,
}

impl Default for UnsupervisedConfig {
    fn default() -> Self {
        UnsupervisedConfig {
            objective: MiObjective::Triplet,
            lr: 0.03,
            momentum: 0.0,
            batch_size: 64,
            epochs: 30,
            ema_decay: 0.999,
            ema_warmup: true,
            seed: 0,
            mi: MiOptions::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl UnsupervisedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size < 2 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("unsupervised run needs lr > 0, batch_size ≥ 2, momentum in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::config("ema_decay must be in [0, 1]"));
        }
        Ok(())
    }
}

pub(crate) fn ema_decay_at(decay: f64, warmup: bool, step: usize) -> f64 {
    if warmup {
        decay.min((1.0 + step as f64) / (10.0 + step as f64))
    } else {
        decay
    }
}
