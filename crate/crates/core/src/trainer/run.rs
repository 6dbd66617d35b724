use crate::netmodel::{
    self, bn_batch_statistics, forward_loss, BnMode, BnRunningStats, MlpSpec, NetError, ParamVector,
};
use crate::rng;
use crate::spectra::{self, Checkpoint};
use crate::stats;
use serde::{Deserialize, Serialize};

use super::log::RunMetadata;
use super::{make_dataset, RunConfig, TrainError};

/// One instrumentation checkpoint, taken before the step at `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    /// Fractional epoch, `step / steps_per_epoch`.
    pub epoch: f64,
    pub train_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    /// Training loss before minus after this step; negative means the step hurt.
    pub delta_loss: Option<f64>,
    pub lambda_k1: Option<f64>,
    pub lambda_k_star: Option<f64>,
    pub cond_ratio: Option<f64>,
    pub trace_k: Option<f64>,
    pub lambda_h_top: Option<Vec<f64>>,
    /// Lanczos found a negative Ritz value.
    pub lambda_h_negative: Option<bool>,
    /// Minibatch gradient norm over the norm of its projection on the top-k
    /// eigenvectors of K.
    pub g_ratio: Option<f64>,
    pub bn_gamma_norms: Vec<f64>,
    pub lr_current: f64,
    /// All L eigenvalues of the Gram matrix, descending.
    pub gram_spectrum: Option<Vec<f64>>,
}

impl MetricRecord {
    pub fn lambda_h1(&self) -> Option<f64> {
        self.lambda_h_top.as_ref().and_then(|v| v.first().copied())
    }

    /// Scalar column by name, as used by reports.
    pub fn metric(&self, name: &str) -> Option<Option<f64>> {
        Some(match name {
            "step" => Some(self.step as f64),
            "epoch" => Some(self.epoch),
            "train_loss" => self.train_loss,
            "train_acc" => self.train_acc,
            "val_acc" => self.val_acc,
            "delta_loss" => self.delta_loss,
            "lambda_k1" => self.lambda_k1,
            "lambda_k_star" => self.lambda_k_star,
            "cond_ratio" => self.cond_ratio,
            "trace_k" => self.trace_k,
            "lambda_h1" => self.lambda_h1(),
            "g_ratio" => self.g_ratio,
            "lr_current" => Some(self.lr_current),
            "bn_gamma_norm" => self.bn_gamma_norms.last().copied(),
            _ => return None,
        })
    }

    pub const METRICS: &'static [&'static str] = &[
        "step",
        "epoch",
        "train_loss",
        "train_acc",
        "val_acc",
        "delta_loss",
        "lambda_k1",
        "lambda_k_star",
        "cond_ratio",
        "trace_k",
        "lambda_h1",
        "g_ratio",
        "lr_current",
        "bn_gamma_norm",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub max_lambda_k1: Option<f64>,
    pub max_lambda_k1_step: Option<u64>,
    pub max_cond_ratio: Option<f64>,
    pub max_cond_ratio_step: Option<u64>,
    pub max_lambda_h1: Option<f64>,
    pub max_lambda_h1_step: Option<u64>,
    pub max_trace_k: Option<f64>,
    pub max_trace_k_step: Option<u64>,
    /// Epoch of the first checkpoint whose training accuracy reaches the threshold.
    pub threshold_epoch: Option<f64>,
    pub first_negative_delta_loss_step: Option<u64>,
    pub diverged: bool,
    /// `lambda_k1 / lambda_h1` per checkpoint.
    pub alpha_series: Vec<Option<f64>>,
    pub checkpoints: usize,
    pub final_train_acc: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn argmax(
    records: &[MetricRecord],
    f: impl Fn(&MetricRecord) -> Option<f64>,
) -> (Option<f64>, Option<u64>) {
    let mut best: Option<(f64, u64)> = None;
    for r in records {
        if let Some(v) = f(r) {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, r.step));
            }
        }
    }
    (best.map(|b| b.0), best.map(|b| b.1))
}

/// Aggregates a metric log into its maxima and indicator steps.
pub fn summarize(records: &[MetricRecord], accuracy_threshold: f64, diverged: bool) -> RunSummary {
    let (max_lambda_k1, max_lambda_k1_step) = argmax(records, |r| r.lambda_k1);
    let (max_cond_ratio, max_cond_ratio_step) = argmax(records, |r| r.cond_ratio);
    let (max_lambda_h1, max_lambda_h1_step) = argmax(records, MetricRecord::lambda_h1);
    let (max_trace_k, max_trace_k_step) = argmax(records, |r| r.trace_k);
    RunSummary {
        max_lambda_k1,
        max_lambda_k1_step,
        max_cond_ratio,
        max_cond_ratio_step,
        max_lambda_h1,
        max_lambda_h1_step,
        max_trace_k,
        max_trace_k_step,
        threshold_epoch: records
            .iter()
            .find(|r| r.train_acc.is_some_and(|a| a >= accuracy_threshold))
            .map(|r| r.epoch),
        first_negative_delta_loss_step: records
            .iter()
            .find(|r| r.delta_loss.is_some_and(|d| d < 0.0))
            .map(|r| r.step),
        diverged,
        alpha_series: records
            .iter()
            .map(|r| match (r.lambda_k1, r.lambda_h1()) {
                (Some(k), Some(h)) if h != 0.0 => finite(k / h),
                _ => None,
            })
            .collect(),
        checkpoints: records.len(),
        final_train_acc: records.last().and_then(|r| r.train_acc),
    }
}

/// Momentum SGD, `v <- beta v + g; theta <- theta - eta v`, in place.
pub fn sgd_step(theta: &mut [f64], g: &[f64], velocity: &mut [f64], eta: f64, beta: f64) {
    assert_eq!(theta.len(), g.len());
    assert_eq!(theta.len(), velocity.len());
    for ((t, gi), v) in theta.iter_mut().zip(g).zip(velocity.iter_mut()) {
        *v = beta * *v + gi;
        *t -= eta * *v;
    }
}

/// Training-set loss before minus after; positive means the step helped.
pub fn delta_loss(
    spec: &MlpSpec,
    before: &ParamVector,
    after: &ParamVector,
    train_set: &netmodel::Batch,
    mode: BnMode<'_>,
) -> Result<f64, NetError> {
    let a = forward_loss(spec, before, train_set, mode)?.mean_loss;
    let b = forward_loss(spec, after, train_set, mode)?.mean_loss;
    finite(a - b).ok_or(NetError::NonFinite)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metadata: RunMetadata,
    pub records: Vec<MetricRecord>,
    pub summary: RunSummary,
    pub final_theta: ParamVector,
    /// Parameters and frozen BN statistics at every checkpoint, when requested.
    pub checkpoints: Vec<Checkpoint>,
}

const STREAM_SHUFFLE: u64 = 1;
const STREAM_EVAL_SUBSET: u64 = 2;
const STREAM_K: u64 = 3;
const STREAM_LANCZOS: u64 = 4;

pub fn run_training(config: &RunConfig) -> Result<RunOutput, TrainError> {
    run_training_with(config, false)
}

/// Trains and instruments one run. Divergence is not an error: the log up to
/// that point is returned with `summary.diverged` set.
pub fn run_training_with(
    config: &RunConfig,
    keep_checkpoints: bool,
) -> Result<RunOutput, TrainError> {
    config.validate()?;
    let data = make_dataset(&config.dataset)?;
    let mut config = config.clone();
    config.dataset.source = data.provenance.clone();
    config.resolve(data.train.len())?;
    let spec = &config.model;
    if data.dim != spec.input_size() || data.classes > spec.output_size() {
        return Err(TrainError::config(
            "model.layer_sizes",
            format!(
                "dataset has {} features and {} classes",
                data.dim, data.classes
            ),
        ));
    }
    let sc = config.spectra;
    let m = sc.m.expect("resolved");
    let method = sc.hvp_method.expect("resolved");

    let train = data.train_batch();
    let val = data.val_batch();
    let n_train = train.len();
    let mut eval_subset: Vec<usize> = (0..n_train).collect();
    let n_eval =
        ((config.eval_subset_fraction * n_train as f64).round() as usize).clamp(1, n_train);
    rng::partial_shuffle(
        &mut rng::rng(rng::derive_seed(config.seed, &[STREAM_EVAL_SUBSET])),
        &mut eval_subset,
        n_eval,
    );
    eval_subset.truncate(n_eval);
    eval_subset.sort_unstable();
    let eval_batch = train.select(&eval_subset);

    let bn_layers: Vec<usize> = (0..spec.hidden_layers())
        .filter(|&l| spec.has_bn(l))
        .collect();
    let mut theta = spec.init_params()?;
    let initial_stats = if bn_layers.is_empty() {
        vec![]
    } else {
        bn_batch_statistics(spec, &theta, &train)?
    };
    let mut running = BnRunningStats::new(config.bn_ema_decay, initial_stats);
    let mut velocity = vec![0.0; theta.len()];

    let steps_per_epoch = n_train.div_ceil(config.batch_size);
    let mut shuffle = rng::rng(rng::derive_seed(config.seed, &[STREAM_SHUFFLE]));
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut diverged = false;
    let mut step: u64 = 0;

    'epochs: for epoch in 0..config.epochs {
        let lr = config.schedule.rate(config.eta, epoch);
        rng::partial_shuffle(&mut shuffle, &mut order, n_train);
        for chunk in order.chunks(config.batch_size) {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            let batch = train.select(&idx);
            let instrument = step.is_multiple_of(config.eval_every as u64);
            let (g, fwd) =
                match netmodel::grad_with_output(spec, &theta, &batch, BnMode::BatchStats) {
                    Ok(r) => r,
                    Err(NetError::NonFinite) => {
                        diverged = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e.into()),
                };
            let mut record = if instrument {
                if keep_checkpoints {
                    checkpoints.push(Checkpoint {
                        theta: theta.clone(),
                        bn_stats: running.layers.clone(),
                    });
                }
                let ctx = Ctx {
                    config: &config,
                    train: &train,
                    val: &val,
                    eval: &eval_batch,
                    m,
                    method,
                    bn_layers: &bn_layers,
                };
                Some(ctx.measure(&theta, &g, running.mode(), step, steps_per_epoch, lr))
            } else {
                None
            };
            let before = theta.clone();
            sgd_step(&mut theta.0, &g.0, &mut velocity, lr, config.momentum);
            let blew_up = !theta.is_finite() || fwd.mean_loss > config.divergence_loss;
            if let Some(rec) = record.as_mut() {
                rec.delta_loss = if blew_up {
                    None
                } else {
                    delta_loss(spec, &before, &theta, &train, running.mode()).ok()
                };
                if rec.train_loss.is_some_and(|l| l > config.divergence_loss) {
                    diverged = true;
                }
            }
            running.update(&fwd.bn_stats);
            if let Some(rec) = record {
                let bad = rec.train_loss.is_none();
                records.push(rec);
                if bad {
                    diverged = true;
                }
            }
            step += 1;
            if blew_up || diverged {
                diverged = true;
                break 'epochs;
            }
        }
    }

    let summary = summarize(&records, config.accuracy_threshold, diverged);
    let metadata = RunMetadata::new(config, eval_subset, steps_per_epoch, step, diverged);
    Ok(RunOutput {
        metadata,
        records,
        summary,
        final_theta: theta,
        checkpoints,
    })
}

struct Ctx<'a> {
    config: &'a RunConfig,
    train: &'a netmodel::Batch,
    val: &'a netmodel::Batch,
    eval: &'a netmodel::Batch,
    m: usize,
    method: netmodel::HvpMethod,
    bn_layers: &'a [usize],
}

impl Ctx<'_> {
    fn measure(
        &self,
        theta: &ParamVector,
        g: &ParamVector,
        mode: BnMode<'_>,
        step: u64,
        steps_per_epoch: usize,
        lr: f64,
    ) -> MetricRecord {
        let cfg = self.config;
        let spec = &cfg.model;
        let train_fwd = forward_loss(spec, theta, self.train, mode).ok();
        let val_acc = if self.val.is_empty() {
            None
        } else {
            forward_loss(spec, theta, self.val, mode)
                .ok()
                .map(|o| o.accuracy)
        };
        let mut rec = MetricRecord {
            step,
            epoch: step as f64 / steps_per_epoch as f64,
            train_loss: train_fwd.as_ref().and_then(|o| finite(o.mean_loss)),
            train_acc: train_fwd.as_ref().map(|o| o.accuracy),
            val_acc,
            delta_loss: None,
            lambda_k1: None,
            lambda_k_star: None,
            cond_ratio: None,
            trace_k: None,
            lambda_h_top: None,
            lambda_h_negative: None,
            g_ratio: None,
            bn_gamma_norms: self
                .bn_layers
                .iter()
                .filter_map(|&l| netmodel::bn_gamma_norm(spec, theta, l).ok())
                .collect(),
            lr_current: lr,
            gram_spectrum: None,
        };
        let sc = cfg.spectra;
        if !sc.enabled || rec.train_loss.is_none() {
            return rec;
        }
        let k_seed = rng::derive_seed(cfg.seed, &[STREAM_K, step]);
        let cov = spectra::sample_minibatch_gradients(
            spec, theta, self.train, mode, sc.l, self.m, k_seed,
        )
        .and_then(|s| spectra::covariance_summary(&s.grads, sc.k));
        if let Ok(cov) = cov {
            rec.lambda_k1 = finite(cov.lambda_k1);
            rec.lambda_k_star = finite(cov.lambda_k_star);
            rec.cond_ratio = cov.cond_ratio.and_then(finite);
            rec.trace_k = finite(cov.trace_k);
            if !cov.top_eigvecs_k.is_empty() {
                rec.g_ratio = spectra::grad_subspace_ratio(&g.0, &cov.top_eigvecs_k)
                    .ok()
                    .and_then(finite);
            }
            rec.gram_spectrum = Some(cov.gram_spectrum);
        }
        let k = sc.k.min(theta.len());
        let iters = sc.lanczos_iters.min(theta.len());
        let l_seed = rng::derive_seed(cfg.seed, &[STREAM_LANCZOS, step]);
        if let Ok(h) =
            spectra::hessian_spectrum(spec, theta, self.eval, mode, k, self.method, iters, l_seed)
        {
            if h.values.iter().all(|v| v.is_finite()) {
                rec.lambda_h_negative = Some(h.any_negative);
                rec.lambda_h_top = Some(h.values);
            }
        }
        rec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakevenIndicators {
    pub argmax_lambda_k1_step: u64,
    pub first_negative_delta_loss_step: Option<u64>,
    /// Pearson correlation of lambda_k1 and lambda_h1 over the checkpoints up
    /// to the argmax of lambda_k1; null when either series is constant there.
    pub lambda_k1_lambda_h1_pearson: Option<f64>,
    pub early_checkpoints: usize,
}

pub const MIN_INDICATOR_CHECKPOINTS: usize = 5;

pub fn breakeven_indicators(records: &[MetricRecord]) -> Result<BreakevenIndicators, TrainError> {
    let usable: Vec<(u64, f64, f64)> = records
        .iter()
        .filter_map(|r| Some((r.step, r.lambda_k1?, r.lambda_h1()?)))
        .collect();
    if usable.len() < MIN_INDICATOR_CHECKPOINTS {
        return Err(TrainError::InsufficientData {
            needed: MIN_INDICATOR_CHECKPOINTS,
            got: usable.len(),
        });
    }
    let mut best = 0;
    for (i, u) in usable.iter().enumerate() {
        if u.1 > usable[best].1 {
            best = i;
        }
    }
    let early = &usable[..=best];
    let ks: Vec<f64> = early.iter().map(|u| u.1).collect();
    let hs: Vec<f64> = early.iter().map(|u| u.2).collect();
    Ok(BreakevenIndicators {
        argmax_lambda_k1_step: usable[best].0,
        first_negative_delta_loss_step: records
            .iter()
            .find(|r| r.delta_loss.is_some_and(|d| d < 0.0))
            .map(|r| r.step),
        lambda_k1_lambda_h1_pearson: stats::pearson(&ks, &hs),
        early_checkpoints: early.len(),
    })
}
