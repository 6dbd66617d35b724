//! Trains two short runs, writes their JSONL logs and renders a report with
//! one SVG panel per metric.
//!
//!     cargo run --release --example report_svg -- [out_dir]

use breakeven::cli::{build_report, Panel, ReportSpec, XAxis};
use breakeven::netmodel::{Activation, LossKind, MlpSpec};
use breakeven::trainer::{run_training, write_jsonl, DatasetSpec, RunConfig, RunLog};
use std::path::PathBuf;

fn main() {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "report_example".into()),
    );
    std::fs::create_dir_all(&out).expect("create output directory");
    let model = MlpSpec::new(
        &[2, 16, 2],
        Activation::Tanh,
        LossKind::SoftmaxCrossEntropy,
        0,
    );
    let mut logs = Vec::new();
    for eta in [0.05, 0.5] {
        let mut cfg = RunConfig::new(model.clone(), DatasetSpec::blobs(400, 2, 0.8), eta, 16, 5);
        cfg.eval_every = 5;
        let run = run_training(&cfg).expect("valid config");
        let path = out.join(format!("eta_{eta}.jsonl"));
        write_jsonl(
            &path,
            &RunLog {
                metadata: run.metadata,
                records: run.records,
            },
        )
        .expect("write log");
        logs.push(path);
    }
    let panels = ["lambda_k1", "lambda_h1", "train_acc", "delta_loss"]
        .into_iter()
        .map(|y| Panel {
            y: y.into(),
            x: XAxis::Epoch,
            log_y: y.starts_with("lambda"),
        })
        .collect();
    let report = build_report(&ReportSpec {
        logs,
        panels,
        sweep_report: None,
        smooth: None,
    })
    .expect("valid report");
    for (name, body) in &report.files {
        std::fs::write(out.join(name), body).expect("write report file");
        println!("wrote {}", out.join(name).display());
    }
}
