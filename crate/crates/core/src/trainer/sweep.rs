use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::RunLog;
use super::run::{run_training, RunSummary};
use super::{RunConfig, TrainError};

/// The hyperparameter varied across a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    Eta(Vec<f64>),
    BatchSize(Vec<usize>),
    Momentum(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Eta(_) => "eta",
            SweepAxis::BatchSize(_) => "batch_size",
            SweepAxis::Momentum(_) => "momentum",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Eta(v) | SweepAxis::Momentum(v) => v.len(),
            SweepAxis::BatchSize(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            SweepAxis::Eta(v) | SweepAxis::Momentum(v) => v[i],
            SweepAxis::BatchSize(v) => v[i] as f64,
        }
    }

    pub fn apply(&self, base: &RunConfig, i: usize) -> RunConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::Eta(v) => c.eta = v[i],
            SweepAxis::BatchSize(v) => c.batch_size = v[i],
            SweepAxis::Momentum(v) => c.momentum = v[i],
        }
        c
    }

    /// Gradient noise grows with the learning rate and momentum and shrinks
    /// with the batch size.
    fn noise_increases_with_value(&self) -> bool {
        !matches!(self, SweepAxis::BatchSize(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    Tie,
    /// Some seed mean is missing (every seed diverged or failed).
    Undetermined,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Tie => "tie",
            Verdict::Undetermined => "undetermined",
        }
    }
}

/// Comparison of two neighbouring axis values, ordered by gradient noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub less_noisy: f64,
    pub more_noisy: f64,
    pub less_noisy_mean: Option<f64>,
    pub more_noisy_mean: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVerdict {
    /// A `RunSummary` maximum, e.g. `max_lambda_k1`.
    pub metric: String,
    /// What the expected ordering is as gradient noise grows.
    pub expected: String,
    /// Seed-averaged maxima in axis order.
    pub seed_means: Vec<Option<f64>>,
    pub pairs: Vec<PairVerdict>,
    pub overall: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub axis_index: usize,
    pub value: f64,
    pub seed: u64,
    pub diverged: bool,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
    #[serde(skip)]
    pub log: Option<RunLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub aggregation: String,
    pub cells: Vec<CellResult>,
    pub verdicts: Vec<MetricVerdict>,
}

const AGGREGATION: &str = "mean over seeds of per-run maxima; diverged or failed cells excluded";

/// (metric, decreases as noise grows)
const METRICS: &[(&str, bool)] = &[
    ("max_lambda_k1", true),
    ("max_cond_ratio", false),
    ("max_lambda_h1", true),
    ("max_trace_k", true),
];

fn metric_of(s: &RunSummary, name: &str) -> Option<f64> {
    match name {
        "max_lambda_k1" => s.max_lambda_k1,
        "max_cond_ratio" => s.max_cond_ratio,
        "max_lambda_h1" => s.max_lambda_h1,
        "max_trace_k" => s.max_trace_k,
        _ => None,
    }
}

/// Runs every (axis value, seed) cell and compares seed-averaged maxima
/// along the axis. A cell's seed depends on the base seed and its seed
/// entry only, so equal axis values give identical runs.
pub fn sweep(base: &RunConfig, axis: &SweepAxis, seeds: &[u64]) -> Result<SweepReport, TrainError> {
    if axis.len() < 2 {
        return Err(TrainError::NeedTwoValues(axis.len()));
    }
    if seeds.is_empty() {
        return Err(TrainError::NoSeeds);
    }
    base.validate()?;
    for i in 0..axis.len() {
        axis.apply(base, i).validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..axis.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let cfg = axis
                .apply(base, i)
                .with_seed(rng::derive_seed(base.seed, &[s]));
            let mut cell = CellResult {
                axis_index: i,
                value: axis.value(i),
                seed: s,
                diverged: false,
                summary: None,
                error: None,
                log: None,
            };
            match run_training(&cfg) {
                Ok(out) => {
                    cell.diverged = out.summary.diverged;
                    cell.summary = Some(out.summary);
                    cell.log = Some(RunLog {
                        metadata: out.metadata,
                        records: out.records,
                    });
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();
    let verdicts = METRICS
        .iter()
        .map(|&(metric, decreasing)| verdict_for(axis, &cells, metric, decreasing))
        .collect();
    Ok(SweepReport {
        axis: axis.name().into(),
        values: (0..axis.len()).map(|i| axis.value(i)).collect(),
        seeds: seeds.to_vec(),
        aggregation: AGGREGATION.into(),
        cells,
        verdicts,
    })
}

fn seed_mean(cells: &[CellResult], i: usize, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = cells
        .iter()
        .filter(|c| c.axis_index == i && !c.diverged)
        .filter_map(|c| c.summary.as_ref().and_then(|s| metric_of(s, metric)))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn verdict_for(
    axis: &SweepAxis,
    cells: &[CellResult],
    metric: &str,
    decreasing: bool,
) -> MetricVerdict {
    let n = axis.len();
    let means: Vec<Option<f64>> = (0..n).map(|i| seed_mean(cells, i, metric)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| axis.value(a).total_cmp(&axis.value(b)));
    if !axis.noise_increases_with_value() {
        order.reverse();
    }
    let pairs: Vec<PairVerdict> = order
        .windows(2)
        .map(|w| {
            let (lo, hi) = (means[w[0]], means[w[1]]);
            let verdict = match (lo, hi) {
                (Some(a), Some(b)) if a == b => Verdict::Tie,
                (Some(a), Some(b)) if (b < a) == decreasing => Verdict::Holds,
                (Some(_), Some(_)) => Verdict::Violated,
                _ => Verdict::Undetermined,
            };
            PairVerdict {
                less_noisy: axis.value(w[0]),
                more_noisy: axis.value(w[1]),
                less_noisy_mean: lo,
                more_noisy_mean: hi,
                verdict,
            }
        })
        .collect();
    let overall = if pairs.iter().any(|p| p.verdict == Verdict::Undetermined) {
        Verdict::Undetermined
    } else if pairs.iter().all(|p| p.verdict == Verdict::Holds) {
        Verdict::Holds
    } else if pairs.iter().all(|p| p.verdict == Verdict::Tie) {
        Verdict::Tie
    } else {
        Verdict::Violated
    };
    let direction = if decreasing {
        "decreasing"
    } else {
        "increasing"
    };
    MetricVerdict {
        metric: metric.into(),
        expected: format!("strictly {direction} as gradient noise grows"),
        seed_means: means,
        pairs,
        overall,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Activation, LossKind, MlpSpec};
    use crate::trainer::DatasetSpec;

    fn base() -> RunConfig {
        let mut c = RunConfig::new(
            MlpSpec::new(
                &[2, 6, 2],
                Activation::Tanh,
                LossKind::SoftmaxCrossEntropy,
                0,
            ),
            DatasetSpec::blobs(80, 2, 0.6),
            0.05,
            8,
            1,
        );
        c.eval_every = 4;
        c.spectra.l = 5;
        c.spectra.k = 2;
        c.spectra.lanczos_iters = 8;
        c.eval_subset_fraction = 0.25;
        c
    }

    fn summary_with(k: f64) -> RunSummary {
        RunSummary {
            max_lambda_k1: Some(k),
            max_lambda_k1_step: Some(0),
            max_cond_ratio: None,
            max_cond_ratio_step: None,
            max_lambda_h1: None,
            max_lambda_h1_step: None,
            max_trace_k: None,
            max_trace_k_step: None,
            threshold_epoch: None,
            first_negative_delta_loss_step: None,
            diverged: false,
            alpha_series: vec![],
            checkpoints: 1,
            final_train_acc: None,
        }
    }

    fn cell(i: usize, value: f64, k: f64) -> CellResult {
        CellResult {
            axis_index: i,
            value,
            seed: 0,
            diverged: false,
            summary: Some(summary_with(k)),
            error: None,
            log: None,
        }
    }

    #[test]
    fn single_value_is_rejected() {
        assert_eq!(
            sweep(&base(), &SweepAxis::Eta(vec![0.1]), &[0]),
            Err(TrainError::NeedTwoValues(1))
        );
        assert_eq!(
            sweep(&base(), &SweepAxis::Eta(vec![0.1, 0.2]), &[]),
            Err(TrainError::NoSeeds)
        );
    }

    #[test]
    fn orderings_follow_noise_direction() {
        let eta = SweepAxis::Eta(vec![0.2, 0.01, 0.05]);
        let cells = vec![cell(0, 0.2, 1.0), cell(1, 0.01, 3.0), cell(2, 0.05, 2.0)];
        let v = verdict_for(&eta, &cells, "max_lambda_k1", true);
        assert_eq!(v.overall, Verdict::Holds);
        assert_eq!(v.pairs[0].less_noisy, 0.01);
        assert_eq!(
            verdict_for(&eta, &cells, "max_lambda_k1", false).overall,
            Verdict::Violated
        );

        // larger batches are less noisy, so lambda_k1 should grow with S
        let s = SweepAxis::BatchSize(vec![8, 32, 128]);
        let cells = vec![cell(0, 8.0, 1.0), cell(1, 32.0, 2.0), cell(2, 128.0, 2.0)];
        let v = verdict_for(&s, &cells, "max_lambda_k1", true);
        assert_eq!(
            v.pairs.iter().map(|p| p.verdict).collect::<Vec<_>>(),
            vec![Verdict::Tie, Verdict::Holds]
        );
        assert_eq!(v.overall, Verdict::Violated);
        assert_eq!(
            verdict_for(&s, &cells, "max_trace_k", true).overall,
            Verdict::Undetermined
        );
    }

    #[test]
    fn repeated_value_ties_bitwise() {
        let r = sweep(&base(), &SweepAxis::Eta(vec![0.05, 0.05]), &[1, 2]).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert_eq!(r.cells[0].summary, r.cells[2].summary);
        assert_eq!(r.cells[1].summary, r.cells[3].summary);
        assert_ne!(r.cells[0].summary, r.cells[1].summary);
        for v in &r.verdicts {
            assert_eq!(v.overall, Verdict::Tie, "{}", v.metric);
        }
    }

    #[test]
    fn diverging_cell_is_isolated() {
        let mut b = base();
        b.spectra.enabled = false;
        b.model.loss = LossKind::Mse;
        let r = sweep(&b, &SweepAxis::Eta(vec![0.05, 10.0]), &[0]).unwrap();
        assert!(!r.cells[0].diverged);
        assert!(r.cells[1].diverged);
        assert!(r.cells[0].log.as_ref().unwrap().records.len() > 1);
    }
}
