//! Learning-rate sweep over three values and a few seeds, printing the
//! per-metric orderings of the seed-mean peaks.
//!
//!     cargo run --release --example lr_sweep -- [epochs] [seeds]

use breakeven::netmodel::{Activation, Init, LossKind, MlpSpec};
use breakeven::trainer::{sweep, DatasetSpec, Provenance, RunConfig, SweepAxis};

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer"))
        .collect();
    let epochs = args.first().copied().unwrap_or(20);
    let seeds: Vec<u64> = (0..args.get(1).copied().unwrap_or(2) as u64).collect();

    let mut model = MlpSpec::new(&[2, 32, 32, 2], Activation::Relu, LossKind::Mse, 0);
    model.init = Init::GaussianScaled { gain: Some(0.3) };
    let mut data = DatasetSpec::blobs(2000, 2, 3.2);
    data.source = Provenance::GaussianBlobs {
        n: 2000,
        classes: 2,
        dim: 2,
        radius: 4.0,
        sigma: 3.2,
    };
    let mut base = RunConfig::new(model, data, 0.05, 32, epochs);
    base.eval_every = 20;

    let report = sweep(&base, &SweepAxis::Eta(vec![0.01, 0.05, 0.2]), &seeds).expect("valid sweep");
    for cell in &report.cells {
        if let Some(s) = &cell.summary {
            println!(
                "eta {:<5} seed {:<2} max lambda_k1 {:.4?}  max lambda_h1 {:.3?}  final acc {:.3?}",
                cell.value, cell.seed, s.max_lambda_k1, s.max_lambda_h1, s.final_train_acc
            );
        }
    }
    for v in &report.verdicts {
        println!(
            "{:<15} expected {:<11} {:?}  -> {}",
            v.metric,
            v.expected,
            v.seed_means,
            v.overall.as_str()
        );
    }
}
