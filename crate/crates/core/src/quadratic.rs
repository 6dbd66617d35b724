//! SGD on a one-dimensional quadratic loss.
//!
//! The loss along the top Hessian direction is
//! `L(psi) = (1/2N) sum_i H_i (psi - psi*)^2`, so the per-example gradient is
//! `H_i (psi - psi*)`, the full-batch curvature is `mean(H_i)` and the
//! per-example curvature spread is the population variance of `H_i`.
//! Minibatches of size `S` are drawn without replacement, which makes the
//! one-step second-moment multiplier
//!
//! ```text
//! E[(psi' - psi*)^2] / (psi - psi*)^2 = (1 - eta*lambda)^2 + s^2 eta^2 (N - S) / (S (N - 1))
//! ```
//!
//! exact. SGD is stable along the direction iff this multiplier is at most 1.

use crate::rng;
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-width of the band around 1 that counts as exactly at the break-even point.
pub const BREAKEVEN_TOL: f64 = 1e-12;
/// Break-even band used when classifying grid cells.
pub const PHASE_BAND: f64 = 1e-9;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadraticError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("offset psi must be non-zero")]
    DegenerateOffset,
    #[error("stability did not flip within {steps} steps (lambda reached {lambda_max})")]
    NoFlip {
        steps: usize,
        lambda_max: f64,
        psi: f64,
    },
}

/// Per-example curvatures along the top direction plus the coupling constant
/// relating the top covariance eigenvalue to the top Hessian eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    curvatures: Vec<f64>,
    psi_star: f64,
    alpha: f64,
}

impl QuadraticModel {
    pub fn new(curvatures: Vec<f64>, psi_star: f64, alpha: f64) -> Result<Self, QuadraticError> {
        if curvatures.len() < 2 {
            return Err(QuadraticError::InvalidModel(
                "need at least two examples".into(),
            ));
        }
        if curvatures.iter().any(|h| !h.is_finite()) || !psi_star.is_finite() || !alpha.is_finite()
        {
            return Err(QuadraticError::InvalidModel("non-finite value".into()));
        }
        let m = stats::mean(&curvatures);
        if m <= 0.0 {
            return Err(QuadraticError::InvalidModel(format!(
                "mean curvature {m} must be positive"
            )));
        }
        Ok(Self {
            curvatures,
            psi_star,
            alpha,
        })
    }

    /// Curvatures drawn i.i.d. from `Uniform(lo, hi)`.
    pub fn uniform(
        n: usize,
        lo: f64,
        hi: f64,
        alpha: f64,
        seed: u64,
    ) -> Result<Self, QuadraticError> {
        use rand::Rng;
        if !(lo < hi) {
            return Err(QuadraticError::InvalidModel(
                "uniform range needs lo < hi".into(),
            ));
        }
        let mut r = rng::rng(seed);
        let h = (0..n).map(|_| r.gen_range(lo..hi)).collect();
        Self::new(h, 0.0, alpha)
    }

    pub fn n(&self) -> usize {
        self.curvatures.len()
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn psi_star(&self) -> f64 {
        self.psi_star
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Full-batch curvature, `mean(H_i)`.
    pub fn lambda_h(&self) -> f64 {
        stats::mean(&self.curvatures)
    }

    /// Population variance of the curvatures (divides by `N`).
    pub fn curvature_variance(&self) -> f64 {
        let m = self.lambda_h();
        let sq: Vec<f64> = self.curvatures.iter().map(|h| (h - m) * (h - m)).collect();
        stats::mean(&sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSetting {
    pub eta: f64,
    pub batch_size: usize,
}

impl SgdSetting {
    pub fn new(eta: f64, batch_size: usize) -> Self {
        Self { eta, batch_size }
    }

    pub fn validate(&self, n: usize) -> Result<(), QuadraticError> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(QuadraticError::InvalidSetting(format!(
                "eta {} must be >= 0",
                self.eta
            )));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(QuadraticError::InvalidSetting(format!(
                "batch size {} outside 1..={n}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Variance factor `(N - S) / (S (N - 1))` of a size-`S` sample mean drawn
/// without replacement from `N` items.
pub fn finite_population_factor(n: usize, s: usize) -> f64 {
    (n - s) as f64 / (s as f64 * (n - 1) as f64)
}

/// Second-moment multiplier from the raw moments.
pub fn lhs_from_moments(eta: f64, batch_size: usize, n: usize, lambda: f64, s2: f64) -> f64 {
    let drift = 1.0 - eta * lambda;
    drift * drift + s2 * eta * eta * finite_population_factor(n, batch_size)
}

pub fn stability_lhs(model: &QuadraticModel, setting: &SgdSetting) -> Result<f64, QuadraticError> {
    setting.validate(model.n())?;
    Ok(lhs_from_moments(
        setting.eta,
        setting.batch_size,
        model.n(),
        model.lambda_h(),
        model.curvature_variance(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Breakeven,
    Unstable,
}

impl Stability {
    pub fn classify(lhs: f64, band: f64) -> Self {
        if (lhs - 1.0).abs() <= band {
            Stability::Breakeven
        } else if lhs < 1.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Breakeven => "breakeven",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdTrajectory {
    /// `psi` after each step, starting with `psi0`; truncated at divergence.
    pub values: Vec<f64>,
    pub diverged: bool,
}

/// Mean curvature of each successive minibatch, drawn without replacement.
fn batch_curvatures<'a>(
    model: &'a QuadraticModel,
    setting: &SgdSetting,
    seed: u64,
) -> impl FnMut() -> f64 + 'a {
    let n = model.n();
    let s = setting.batch_size;
    let full_mean = model.lambda_h();
    let mut r = rng::rng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    move || {
        if s == n {
            full_mean
        } else {
            rng::partial_shuffle(&mut r, &mut idx, s);
            idx[..s].iter().map(|&i| model.curvatures[i]).sum::<f64>() / s as f64
        }
    }
}

/// Runs the projected SGD recursion `psi <- psi - eta * mean_{batch}(H_i) (psi - psi*)`.
pub fn simulate_sgd(
    model: &QuadraticModel,
    setting: &SgdSetting,
    psi0: f64,
    steps: usize,
    seed: u64,
    divergence_threshold: f64,
) -> Result<SgdTrajectory, QuadraticError> {
    setting.validate(model.n())?;
    let mut next_curvature = batch_curvatures(model, setting, seed);
    let mut values = Vec::with_capacity(steps + 1);
    values.push(psi0);
    let mut offset = psi0 - model.psi_star;
    let mut diverged = false;
    for _ in 0..steps {
        offset -= setting.eta * next_curvature() * offset;
        values.push(model.psi_star + offset);
        if !(offset.abs() <= divergence_threshold) {
            diverged = true;
            break;
        }
    }
    Ok(SgdTrajectory { values, diverged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    /// Least-squares slope of `log mean((psi - psi*)^2)` against the step.
    pub growth_rate: f64,
    pub log_lhs: f64,
    /// `log mean((psi - psi*)^2)` at every step.
    pub log_mean_square: Vec<f64>,
}

/// `log(mean(exp(xs)))` without overflow or underflow.
fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + stats::mean(&shifted).ln()
}

/// Fits the per-step growth rate of the ensemble second moment.
///
/// Trajectory `i` uses seed `seed + i`. Each trajectory is tracked as
/// `log (psi - psi*)^2` so fast decay or growth cannot under- or overflow,
/// and the ensemble mean is a shifted pairwise sum, independent of
/// evaluation order.
pub fn monte_carlo_growth(
    model: &QuadraticModel,
    setting: &SgdSetting,
    psi0: f64,
    trajectories: usize,
    steps: usize,
    seed: u64,
) -> Result<MonteCarloEstimate, QuadraticError> {
    let lhs = stability_lhs(model, setting)?;
    let offset = psi0 - model.psi_star;
    if offset == 0.0 {
        return Err(QuadraticError::DegenerateOffset);
    }
    let start = 2.0 * offset.abs().ln();
    let runs: Vec<Vec<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut next_curvature = batch_curvatures(model, setting, seed.wrapping_add(i as u64));
            let mut log_sq = Vec::with_capacity(steps + 1);
            log_sq.push(start);
            let mut cur = start;
            for _ in 0..steps {
                cur += 2.0 * (1.0 - setting.eta * next_curvature()).abs().ln();
                log_sq.push(cur);
            }
            log_sq
        })
        .collect();
    let mut column = vec![0.0; trajectories];
    let log_mean_square: Vec<f64> = (0..=steps)
        .map(|t| {
            for (c, run) in column.iter_mut().zip(&runs) {
                *c = run[t];
            }
            log_mean_exp(&column)
        })
        .collect();
    let xs: Vec<f64> = (0..=steps).map(|t| t as f64).collect();
    Ok(MonteCarloEstimate {
        growth_rate: stats::ls_slope(&xs, &log_mean_square),
        log_lhs: lhs.ln(),
        log_mean_square,
    })
}

/// Outcome of the closed-form break-even computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakevenCurvature {
    pub lambda: f64,
    /// The formula gave a non-positive curvature: no stable positive
    /// curvature exists for these hyperparameters.
    pub non_positive: bool,
}

/// Curvature at which the multiplier equals 1 when the curvature spread is
/// tied to the mean curvature through `s^2 = alpha * lambda / psi^2`:
/// `lambda* = (2 - alpha * eta * (N - S) / (S (N - 1) psi^2)) / eta`.
pub fn breakeven_curvature_closed_form(
    eta: f64,
    batch_size: usize,
    n: usize,
    alpha: f64,
    psi: f64,
) -> Result<BreakevenCurvature, QuadraticError> {
    if psi == 0.0 {
        return Err(QuadraticError::DegenerateOffset);
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(QuadraticError::InvalidSetting("eta must be > 0".into()));
    }
    if n < 2 || batch_size == 0 || batch_size > n {
        return Err(QuadraticError::InvalidSetting(format!(
            "need 1 <= S <= N, N >= 2; got S={batch_size} N={n}"
        )));
    }
    let noise = alpha / (psi * psi) * finite_population_factor(n, batch_size) * eta;
    let lambda = (2.0 - noise) / eta;
    Ok(BreakevenCurvature {
        lambda,
        non_positive: lambda <= 0.0,
    })
}

/// Stability multiplier under the coupled spread `s^2 = alpha * lambda / psi^2`.
pub fn coupled_lhs(
    eta: f64,
    batch_size: usize,
    n: usize,
    alpha: f64,
    lambda: f64,
    psi: f64,
) -> f64 {
    lhs_from_moments(eta, batch_size, n, lambda, alpha * lambda / (psi * psi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthDirection {
    /// Curvature grows from a stable start until training first becomes unstable.
    IncreasingFromStable,
    /// Curvature shrinks from an unstable start until training first becomes stable.
    DecreasingFromUnstable,
}

/// Multiplicative curvature schedule. Each step multiplies the curvature by
/// `rho` and divides the offset by `rho`: the offset shrinks while curvature
/// grows and grows while curvature shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSchedule {
    pub direction: GrowthDirection,
    pub lambda0: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub psi0: f64,
}

fn default_rho() -> f64 {
    1.01
}

impl GrowthSchedule {
    pub fn validate(&self) -> Result<(), QuadraticError> {
        let bad = |m: &str| Err(QuadraticError::InvalidSchedule(m.into()));
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad("lambda0 must be > 0");
        }
        if self.psi0 == 0.0 || !self.psi0.is_finite() {
            return bad("psi0 must be non-zero");
        }
        match self.direction {
            GrowthDirection::IncreasingFromStable if !(self.rho > 1.0) => {
                bad("increasing schedule needs rho > 1")
            }
            GrowthDirection::DecreasingFromUnstable if !(self.rho > 0.0 && self.rho < 1.0) => {
                bad("decreasing schedule needs 0 < rho < 1")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthOutcome {
    /// Curvature at the step where stability flipped.
    pub lambda_at_flip: f64,
    /// Largest curvature visited.
    pub lambda_max: f64,
    pub psi_at_stop: f64,
    pub step_of_breakeven: usize,
}

/// Walks the schedule until the stability predicate flips.
pub fn run_growth_dynamics(
    setting: &SgdSetting,
    schedule: &GrowthSchedule,
    alpha: f64,
    n: usize,
    max_steps: usize,
) -> Result<GrowthOutcome, QuadraticError> {
    schedule.validate()?;
    setting.validate(n)?;
    if n < 2 {
        return Err(QuadraticError::InvalidSetting("N must be >= 2".into()));
    }
    let mut lambda = schedule.lambda0;
    let mut psi = schedule.psi0;
    let mut lambda_max = lambda;
    let want_stable = schedule.direction == GrowthDirection::DecreasingFromUnstable;
    for step in 0..=max_steps {
        let lhs = coupled_lhs(setting.eta, setting.batch_size, n, alpha, lambda, psi);
        let stable = lhs <= 1.0;
        if stable == want_stable {
            if step == 0 {
                return Err(QuadraticError::InvalidSchedule(format!(
                    "schedule starts {}",
                    if stable { "stable" } else { "unstable" }
                )));
            }
            return Ok(GrowthOutcome {
                lambda_at_flip: lambda,
                lambda_max,
                psi_at_stop: psi,
                step_of_breakeven: step,
            });
        }
        if step == max_steps {
            break;
        }
        lambda *= schedule.rho;
        psi /= schedule.rho;
        lambda_max = lambda_max.max(lambda);
    }
    Err(QuadraticError::NoFlip {
        steps: max_steps,
        lambda_max,
        psi,
    })
}

/// Classifies every `(eta, S)` cell; rows follow `batch_sizes`, columns `etas`.
pub fn phase_diagram(
    etas: &[f64],
    batch_sizes: &[usize],
    model: &QuadraticModel,
) -> Result<Vec<Vec<Stability>>, QuadraticError> {
    if etas.is_empty() || batch_sizes.is_empty() {
        return Err(QuadraticError::InvalidSetting(
            "grids must be non-empty".into(),
        ));
    }
    batch_sizes
        .iter()
        .map(|&s| {
            etas.iter()
                .map(|&eta| {
                    let lhs = stability_lhs(model, &SgdSetting::new(eta, s))?;
                    Ok(Stability::classify(lhs, PHASE_BAND))
                })
                .collect()
        })
        .collect()
}
