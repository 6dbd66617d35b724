//! The `breakeven` command line: `simulate`, `train`, `sweep` and `report`.
//!
//! Every output file starts with a line (JSON metadata or a comment) carrying
//! the SHA-256 of the resolved configuration, and files are written through a
//! temporary file plus rename. Exit codes: 0 success, 1 divergence or a
//! schedule that never flipped, 2 configuration errors, 3 I/O errors.

mod config;
mod report;
mod simulate;
pub mod svg;

pub use config::{
    load_json, parse_json, parse_run_config, parse_simulate_config, parse_sweep_config,
    GrowthConfig, MonteCarloConfig, Overrides, Panel, QuadraticSource, ReportSpec, SimulateConfig,
    SweepConfig, XAxis,
};
pub use report::{build_report, ReportOutput};
pub use simulate::{simulate_tables, SimulateTables};

use crate::trainer::{self, breakeven_indicators, config_hash, run_training, write_atomic, RunLog};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Schema { .. } => 2,
            CliError::Io(_) => 3,
        }
    }
}

const SIMULATE_HELP: &str = "\
Outputs (CSV, first line a `# config_hash=... config=...` comment):
  phase_diagram.csv  eta, batch_size, lhs, stability
      lhs = (1 - eta*lambda)^2 + s^2 eta^2 (N-S)/(S(N-1)), with lambda the mean
      curvature and s^2 the population variance of the per-example curvatures;
      stability is stable | breakeven | unstable
  breakeven.csv      eta, batch_size, n, alpha, psi, lambda_star, two_over_eta, non_positive
      lambda_star is the curvature at which lhs = 1 when s^2 = alpha*lambda/psi^2;
      one extra row per eta has batch_size = n, where lambda_star = 2/eta
  growth.csv         eta, batch_size, direction, lambda0, rho, psi0, lambda_at_flip,
                     lambda_max, psi_at_stop, step_of_breakeven, status
      status is ok | no_flip | starts_flipped (written when `growth` is configured)
  mc_validation.csv  eta, batch_size, lhs, log_lhs, growth_rate, abs_diff
      growth_rate is the fitted per-step slope of log E[(psi - psi*)^2]
      (written when `monte_carlo` is configured)
Exit code 1 when some growth schedule never flips.";

const TRAIN_HELP: &str = "\
Outputs:
  run.jsonl     line 1: metadata {schema_version, config (resolved), prng_algorithm,
                artifact_version, config_hash, momentum_convention, steps_per_epoch,
                eval_subset, steps_completed, diverged}
                then one record per checkpoint: step, epoch (fractional), train_loss,
                train_acc, val_acc, delta_loss (loss before minus after the step),
                lambda_k1, lambda_k_star, cond_ratio (lambda_k_star / lambda_k1),
                trace_k, lambda_h_top (top-k Hessian eigenvalues), lambda_h_negative,
                g_ratio (|g| / |projection of g on the top-k eigenvectors of K|),
                bn_gamma_norms, lr_current, gram_spectrum; missing values are null
  summary.json  config_hash, summary (maxima with steps, threshold_epoch,
                first_negative_delta_loss_step, diverged, alpha_series) and
                breakeven_indicators (argmax lambda_k1 step, first negative
                delta_loss step, early-phase lambda_k1/lambda_h1 Pearson r)
  theta.bklb    with --snapshot: 'BKLB', u32 version, u64 D, D little-endian f64
Exit code 1 when the run diverged (outputs are still written).";

const SWEEP_HELP: &str = "\
Config: {\"base\": <train config>, \"axis\": {\"eta\"|\"batch_size\"|\"momentum\": [...]},
         \"seeds\": [...]}
Outputs:
  cells/<axis>_<index>_seed_<seed>.jsonl   one training log per cell (see `train --help`)
  sweep_report.json  config_hash, config, report: per-cell summaries and, for
                     max_lambda_k1, max_cond_ratio, max_lambda_h1 and max_trace_k,
                     seed means plus pairwise and overall verdicts
                     (holds | violated | tie | undetermined)
Diverged cells are marked and excluded from the seed means; the exit code stays 0.";

const REPORT_HELP: &str = "\
Metrics: step, epoch, train_loss, train_acc, val_acc, delta_loss, lambda_k1,
         lambda_k_star, cond_ratio, trace_k, lambda_h1, g_ratio, lr_current,
         bn_gamma_norm (last batch-norm layer)
Outputs:
  panel_<i>_<metric>.svg  one line chart per panel, one series per log; dashed
                          vertical lines mark each run's threshold epoch
  summary.md              table of run maxima and, with a sweep report, verdicts
An unknown metric or an empty panel list exits with code 2.";

#[derive(Debug, Parser)]
#[command(
    name = "breakeven",
    version,
    about = "SGD break-even analysis and instrumented training"
)]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub momentum: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub eval_every: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability tables for the quadratic model.
    #[command(after_long_help = SIMULATE_HELP)]
    Simulate,
    /// Train one instrumented run.
    #[command(after_long_help = TRAIN_HELP)]
    Train {
        /// Also dump the final parameters.
        #[arg(long)]
        snapshot: bool,
    },
    /// Train a grid of runs along one axis and compare their maxima.
    #[command(after_long_help = SWEEP_HELP)]
    Sweep,
    /// Render SVG panels and a Markdown summary from metric logs.
    #[command(after_long_help = REPORT_HELP)]
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metric log (repeatable); added to the config's logs.
    #[arg(long = "log")]
    pub logs: Vec<PathBuf>,
    /// Panel metric (repeatable); added to the config's panels.
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
    /// x axis for panels given with --metric.
    #[arg(long, value_enum, default_value = "step")]
    pub x: XArg,
    /// Log-scale y for panels given with --metric.
    #[arg(long)]
    pub log_y: bool,
    #[arg(long)]
    pub smooth: Option<usize>,
    #[arg(long)]
    pub sweep_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum XArg {
    Step,
    Epoch,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            eta: self.eta,
            batch_size: self.batch_size,
            momentum: self.momentum,
            epochs: self.epochs,
            eval_every: self.eval_every,
        }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let ov = cli.overrides();
    match &cli.command {
        Command::Simulate => {
            let cfg = parse_simulate_config(cli.config.as_deref(), &ov)?;
            ensure_dir(&cli.out)?;
            let tables = simulate_tables(&cfg)?;
            for (name, body) in tables.files() {
                write_file(&cli.out.join(name), body.as_bytes())?;
                cli.say(format!("wrote {}", cli.out.join(name).display()));
            }
            Ok(if tables.any_no_flip { 1 } else { 0 })
        }
        Command::Train { snapshot } => {
            let path = require_config(cli)?;
            let cfg = parse_run_config(path, &ov)?;
            ensure_dir(&cli.out)?;
            cli.say(format!("training for {} epochs", cfg.epochs));
            let out = run_training(&cfg)?;
            let hash = out.metadata.config_hash.clone();
            let indicators = breakeven_indicators(&out.records).ok();
            let diverged = out.summary.diverged;
            let log = RunLog {
                metadata: out.metadata,
                records: out.records,
            };
            write_file(&cli.out.join("run.jsonl"), log.to_jsonl().as_bytes())?;
            let summary = TrainSummary {
                config_hash: hash,
                summary: &out.summary,
                breakeven_indicators: indicators,
            };
            write_file(&cli.out.join("summary.json"), pretty(&summary).as_bytes())?;
            if *snapshot {
                trainer::write_snapshot(&cli.out.join("theta.bklb"), &out.final_theta)?;
            }
            cli.say(format!(
                "{} checkpoints; max lambda_k1 {:?}; diverged {}",
                log.records.len(),
                out.summary.max_lambda_k1,
                diverged
            ));
            Ok(if diverged { 1 } else { 0 })
        }
        Command::Sweep => {
            let path = require_config(cli)?;
            let cfg = parse_sweep_config(path, &ov)?;
            ensure_dir(&cli.out.join("cells"))?;
            cli.say(format!(
                "sweeping {} over {} values x {} seeds",
                cfg.axis.name(),
                cfg.axis.len(),
                cfg.seeds.len()
            ));
            let report = trainer::sweep(&cfg.base, &cfg.axis, &cfg.seeds)?;
            for cell in &report.cells {
                if let Some(log) = &cell.log {
                    let name = format!(
                        "{}_{}_seed_{}.jsonl",
                        report.axis, cell.axis_index, cell.seed
                    );
                    write_file(&cli.out.join("cells").join(name), log.to_jsonl().as_bytes())?;
                }
            }
            let doc = SweepDoc {
                config_hash: config_hash(&cfg),
                config: &cfg,
                report: &report,
            };
            write_file(&cli.out.join("sweep_report.json"), pretty(&doc).as_bytes())?;
            for v in &report.verdicts {
                cli.say(format!("{}: {}", v.metric, v.overall.as_str()));
            }
            Ok(0)
        }
        Command::Report(args) => {
            let mut spec = match &cli.config {
                Some(p) => load_json::<ReportSpec>(p)?,
                None => ReportSpec {
                    logs: vec![],
                    panels: vec![],
                    sweep_report: None,
                    smooth: None,
                },
            };
            spec.logs.extend(args.logs.iter().cloned());
            let x = match args.x {
                XArg::Step => XAxis::Step,
                XArg::Epoch => XAxis::Epoch,
            };
            spec.panels.extend(args.metrics.iter().map(|m| Panel {
                y: m.clone(),
                x,
                log_y: args.log_y,
            }));
            if args.smooth.is_some() {
                spec.smooth = args.smooth;
            }
            if args.sweep_report.is_some() {
                spec.sweep_report = args.sweep_report.clone();
            }
            let output = build_report(&spec)?;
            ensure_dir(&cli.out)?;
            for (name, body) in &output.files {
                write_file(&cli.out.join(name), body.as_bytes())?;
                cli.say(format!("wrote {}", cli.out.join(name).display()));
            }
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    config_hash: String,
    summary: &'a trainer::RunSummary,
    breakeven_indicators: Option<trainer::BreakevenIndicators>,
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    config_hash: String,
    config: &'a SweepConfig,
    report: &'a trainer::SweepReport,
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn require_config(cli: &Cli) -> Result<&Path, CliError> {
    cli.config.as_deref().ok_or_else(|| CliError::Schema {
        field: "--config".into(),
        reason: "required for this subcommand".into(),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
