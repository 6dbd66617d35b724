use crate::quadratic::{GrowthDirection, QuadraticModel};
use crate::trainer::{RunConfig, SweepAxis, TrainError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::CliError;

/// Flag values that override the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub batch_size: Option<usize>,
    pub momentum: Option<f64>,
    pub epochs: Option<usize>,
    pub eval_every: Option<usize>,
}

impl Overrides {
    pub fn apply_to_run(&self, c: &mut RunConfig) {
        if let Some(s) = self.seed {
            *c = c.clone().with_seed(s);
        }
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.momentum {
            c.momentum = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.eval_every {
            c.eval_every = v;
        }
    }
}

/// Reads a JSON file into `T`, reporting the offending field path on failure.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_json(&text)
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "<root>".to_string()
        } else {
            path
        };
        CliError::Schema {
            field,
            reason: e.inner().to_string(),
        }
    })
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig { field, reason } => CliError::Schema { field, reason },
            TrainError::InvalidParams(r) => CliError::Schema {
                field: "dataset".into(),
                reason: r,
            },
            TrainError::CsvParse { line, reason } => CliError::Schema {
                field: "dataset.source.path".into(),
                reason: format!("line {line}: {reason}"),
            },
            TrainError::NeedTwoValues(n) => CliError::Schema {
                field: "axis".into(),
                reason: format!("needs at least two values, got {n}"),
            },
            TrainError::NoSeeds => CliError::Schema {
                field: "seeds".into(),
                reason: "must not be empty".into(),
            },
            TrainError::Io(m) => CliError::Io(m),
            other => CliError::Compute(other.to_string()),
        }
    }
}

/// Parses a training config and applies flag overrides, then validates.
pub fn parse_run_config(path: &Path, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut c: RunConfig = load_json(path)?;
    ov.apply_to_run(&mut c);
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub axis: SweepAxis,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

pub fn parse_sweep_config(path: &Path, ov: &Overrides) -> Result<SweepConfig, CliError> {
    let mut c: SweepConfig = load_json(path)?;
    let mut ov = ov.clone();
    if let Some(s) = ov.seed.take() {
        c.base.seed = s;
    }
    ov.apply_to_run(&mut c.base);
    c.base.validate()?;
    if c.axis.len() < 2 {
        return Err(TrainError::NeedTwoValues(c.axis.len()).into());
    }
    if c.seeds.is_empty() {
        return Err(TrainError::NoSeeds.into());
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadraticSource {
    /// `n` curvatures drawn from `Uniform(lo, hi)` with the config seed.
    Uniform {
        n: usize,
        lo: f64,
        hi: f64,
        alpha: f64,
    },
    Explicit {
        curvatures: Vec<f64>,
        #[serde(default)]
        psi_star: f64,
        alpha: f64,
    },
}

impl Default for QuadraticSource {
    fn default() -> Self {
        QuadraticSource::Uniform {
            n: 100,
            lo: 0.0,
            hi: 2.0,
            alpha: 0.5,
        }
    }
}

impl QuadraticSource {
    pub fn build(&self, seed: u64) -> Result<QuadraticModel, CliError> {
        let r = match self {
            QuadraticSource::Uniform { n, lo, hi, alpha } => {
                QuadraticModel::uniform(*n, *lo, *hi, *alpha, seed)
            }
            QuadraticSource::Explicit {
                curvatures,
                psi_star,
                alpha,
            } => QuadraticModel::new(curvatures.clone(), *psi_star, *alpha),
        };
        r.map_err(|e| CliError::Schema {
            field: "model".into(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub direction: GrowthDirection,
    pub lambda0: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "one")]
    pub psi0: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_rho() -> f64 {
    1.01
}
fn one() -> f64 {
    1.0
}
fn default_max_steps() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_mc_steps")]
    pub steps: usize,
    #[serde(default = "one")]
    pub psi0: f64,
}

fn default_trajectories() -> usize {
    10_000
}
fn default_mc_steps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub model: QuadraticSource,
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    /// Offset used in the break-even curvature table.
    #[serde(default = "one")]
    pub breakeven_psi: f64,
    #[serde(default)]
    pub growth: Option<GrowthConfig>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_etas() -> Vec<f64> {
    vec![0.5, 0.1, 0.02]
}
fn default_batch_sizes() -> Vec<usize> {
    vec![1, 10, 50]
}

impl Default for SimulateConfig {
    fn default() -> Self {
        parse_json("{}").expect("all fields default")
    }
}

pub fn parse_simulate_config(
    path: Option<&Path>,
    ov: &Overrides,
) -> Result<SimulateConfig, CliError> {
    let mut c: SimulateConfig = match path {
        Some(p) => load_json(p)?,
        None => SimulateConfig::default(),
    };
    for (name, set) in [
        ("momentum", ov.momentum.is_some()),
        ("epochs", ov.epochs.is_some()),
        ("eval_every", ov.eval_every.is_some()),
    ] {
        if set {
            return Err(CliError::Schema {
                field: name.into(),
                reason: "not used by simulate".into(),
            });
        }
    }
    if let Some(s) = ov.seed {
        c.seed = s;
    }
    if let Some(e) = ov.eta {
        c.etas = vec![e];
    }
    if let Some(s) = ov.batch_size {
        c.batch_sizes = vec![s];
    }
    let schema = |field: &str, reason: &str| {
        Err(CliError::Schema {
            field: field.into(),
            reason: reason.into(),
        })
    };
    if c.etas.is_empty() || c.etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return schema("etas", "must be non-empty and every eta > 0");
    }
    if c.batch_sizes.is_empty() || c.batch_sizes.contains(&0) {
        return schema("batch_sizes", "must be non-empty and every batch size >= 1");
    }
    if c.breakeven_psi == 0.0 || !c.breakeven_psi.is_finite() {
        return schema("breakeven_psi", "must be finite and non-zero");
    }
    if let Some(mc) = &c.monte_carlo {
        if mc.trajectories < 2 || mc.steps < 2 {
            return schema("monte_carlo", "needs at least 2 trajectories and 2 steps");
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    #[default]
    Step,
    Epoch,
}

impl XAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            XAxis::Step => "step",
            XAxis::Epoch => "epoch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    /// A `MetricRecord` column.
    pub y: String,
    #[serde(default)]
    pub x: XAxis,
    #[serde(default)]
    pub log_y: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    pub logs: Vec<PathBuf>,
    pub panels: Vec<Panel>,
    /// Optional sweep report whose verdicts go into the Markdown summary.
    #[serde(default)]
    pub sweep_report: Option<PathBuf>,
    /// Trailing moving-average window; off by default.
    #[serde(default)]
    pub smooth: Option<usize>,
}
