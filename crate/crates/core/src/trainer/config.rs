use crate::netmodel::{HvpMethod, MlpSpec};
use serde::{Deserialize, Serialize};

use super::{DatasetSpec, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiplies the rate by `factor` once, from epoch `epoch` on
    /// (`factor = 0.1` divides it by ten).
    StepDecay { epoch: usize, factor: f64 },
}

impl LrSchedule {
    pub fn rate(&self, eta: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => eta,
            LrSchedule::StepDecay { epoch: e, factor } if epoch >= e => eta * factor,
            LrSchedule::StepDecay { .. } => eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    /// Skip all spectral instrumentation when false.
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Number of sampled minibatch gradients.
    #[serde(default = "default_l")]
    pub l: usize,
    /// Minibatch size for the gradient samples; `null` resolves to
    /// `max(8, n_train / 25)`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Number of top eigenpairs for both K and H.
    #[serde(default = "default_k")]
    pub k: usize,
    /// `null` resolves to `pearlmutter`, or `fd` when the model has batch norm.
    #[serde(default)]
    pub hvp_method: Option<HvpMethod>,
    #[serde(default = "default_lanczos_iters")]
    pub lanczos_iters: usize,
}

fn yes() -> bool {
    true
}
fn default_l() -> usize {
    25
}
fn default_k() -> usize {
    5
}
fn default_lanczos_iters() -> usize {
    30
}
fn default_eval_every() -> usize {
    10
}
fn default_eval_subset_fraction() -> f64 {
    0.05
}
fn default_accuracy_threshold() -> f64 {
    0.60
}
fn default_bn_decay() -> f64 {
    0.99
}
fn default_divergence_loss() -> f64 {
    1e6
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            l: default_l(),
            m: None,
            k: default_k(),
            hvp_method: None,
            lanczos_iters: default_lanczos_iters(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: MlpSpec,
    pub dataset: DatasetSpec,
    pub eta: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub epochs: usize,
    /// Steps between instrumentation checkpoints.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub spectra: SpectraConfig,
    /// Share of the training set used for Hessian estimates.
    #[serde(default = "default_eval_subset_fraction")]
    pub eval_subset_fraction: f64,
    /// Drives batching and spectral sampling. Weight init uses `model.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_accuracy_threshold")]
    pub accuracy_threshold: f64,
    #[serde(default = "default_bn_decay")]
    pub bn_ema_decay: f64,
    /// A minibatch or training loss above this marks the run diverged.
    #[serde(default = "default_divergence_loss")]
    pub divergence_loss: f64,
}

impl RunConfig {
    pub fn new(
        model: MlpSpec,
        dataset: DatasetSpec,
        eta: f64,
        batch_size: usize,
        epochs: usize,
    ) -> Self {
        Self {
            model,
            dataset,
            eta,
            batch_size,
            momentum: 0.0,
            schedule: LrSchedule::Constant,
            epochs,
            eval_every: default_eval_every(),
            spectra: SpectraConfig::default(),
            eval_subset_fraction: default_eval_subset_fraction(),
            seed: 0,
            accuracy_threshold: default_accuracy_threshold(),
            bn_ema_decay: default_bn_decay(),
            divergence_loss: default_divergence_loss(),
        }
    }

    /// Sets both the run seed and the weight-init seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self
    }

    /// Checks everything that does not depend on the dataset size.
    pub fn validate(&self) -> Result<(), TrainError> {
        self.model
            .validate()
            .map_err(|e| TrainError::config("model", e.to_string()))?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(TrainError::config("eta", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::config("batch_size", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::config("momentum", "must lie in [0, 1)"));
        }
        if let LrSchedule::StepDecay { factor, .. } = self.schedule {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(TrainError::config("schedule.factor", "must be > 0"));
            }
        }
        if self.epochs == 0 {
            return Err(TrainError::config("epochs", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(TrainError::config("eval_every", "must be >= 1"));
        }
        let s = &self.spectra;
        if s.l < 2 {
            return Err(TrainError::config("spectra.l", "must be >= 2"));
        }
        if s.m == Some(0) {
            return Err(TrainError::config("spectra.m", "must be >= 1"));
        }
        if s.k == 0 || s.k >= s.l {
            return Err(TrainError::config("spectra.k", "must satisfy 1 <= k < l"));
        }
        if s.lanczos_iters < s.k {
            return Err(TrainError::config("spectra.lanczos_iters", "must be >= k"));
        }
        if s.hvp_method == Some(HvpMethod::Pearlmutter) && self.model.any_bn() {
            return Err(TrainError::config(
                "spectra.hvp_method",
                "pearlmutter does not support batch norm; use fd",
            ));
        }
        if !(self.eval_subset_fraction > 0.0 && self.eval_subset_fraction <= 1.0) {
            return Err(TrainError::config(
                "eval_subset_fraction",
                "must lie in (0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(TrainError::config(
                "accuracy_threshold",
                "must lie in [0, 1]",
            ));
        }
        if !(0.0..1.0).contains(&self.bn_ema_decay) {
            return Err(TrainError::config("bn_ema_decay", "must lie in [0, 1)"));
        }
        if !(self.divergence_loss > 0.0) {
            return Err(TrainError::config("divergence_loss", "must be > 0"));
        }
        if self.dataset.val_fraction < 0.0 || self.dataset.val_fraction >= 1.0 {
            return Err(TrainError::config(
                "dataset.val_fraction",
                "must lie in [0, 1)",
            ));
        }
        Ok(())
    }

    /// Fills the data-dependent defaults and checks the size constraints.
    pub fn resolve(&mut self, n_train: usize) -> Result<(), TrainError> {
        self.validate()?;
        let m = *self.spectra.m.get_or_insert((n_train / 25).max(8));
        if self.spectra.hvp_method.is_none() {
            self.spectra.hvp_method = Some(if self.model.any_bn() {
                HvpMethod::Fd
            } else {
                HvpMethod::Pearlmutter
            });
        }
        if self.batch_size > n_train {
            return Err(TrainError::config(
                "batch_size",
                format!("exceeds the {n_train} training examples"),
            ));
        }
        if self.spectra.enabled && m > n_train {
            return Err(TrainError::config(
                "spectra.m",
                format!("exceeds the {n_train} training examples"),
            ));
        }
        Ok(())
    }
}
