//! Instrumented SGD training and sweep orchestration.
//!
//! [`run_training`] trains an [`MlpSpec`](crate::netmodel::MlpSpec) with
//! momentum SGD and, every `eval_every` steps, records a [`MetricRecord`]
//! holding losses, accuracies, the one-step loss change, the gradient
//! covariance spectrum, the top Hessian eigenvalues and batch-norm scale
//! norms. [`sweep`] runs a grid of configurations and compares the
//! seed-averaged maxima along one axis.

mod config;
mod dataset;
mod log;
mod run;
mod sweep;

pub use config::{LrSchedule, RunConfig, SpectraConfig};
pub use dataset::{make_dataset, parse_csv, Dataset, DatasetSpec, Provenance};
pub use log::{
    config_hash, read_jsonl, read_snapshot, write_atomic, write_jsonl, write_snapshot, RunLog,
    RunMetadata, MOMENTUM_CONVENTION, SCHEMA_VERSION, SNAPSHOT_MAGIC,
};
pub use run::{
    breakeven_indicators, delta_loss, run_training, run_training_with, sgd_step, summarize,
    BreakevenIndicators, MetricRecord, RunOutput, RunSummary, MIN_INDICATOR_CHECKPOINTS,
};
pub use sweep::{sweep, CellResult, MetricVerdict, PairVerdict, SweepAxis, SweepReport, Verdict};

use crate::netmodel::NetError;
use crate::spectra::SpectraError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),
    #[error("csv line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed log: {0}")]
    Format(String),
    #[error("need at least {needed} usable checkpoints, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("a sweep axis needs at least two values, got {0}")]
    NeedTwoValues(usize),
    #[error("a sweep needs at least one seed")]
    NoSeeds,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

impl TrainError {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        TrainError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
