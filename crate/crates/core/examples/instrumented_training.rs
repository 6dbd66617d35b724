//! Trains a small MLP on Gaussian blobs and prints the spectral metrics at
//! each checkpoint.
//!
//!     cargo run --release --example instrumented_training -- [eta] [epochs] [eval_every]

use breakeven::netmodel::{Activation, LossKind, MlpSpec};
use breakeven::trainer::{breakeven_indicators, run_training, DatasetSpec, RunConfig};
use std::time::Instant;

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let eta = args.first().copied().unwrap_or(0.05);
    let epochs = args.get(1).copied().unwrap_or(20.0) as usize;
    let eval_every = args.get(2).copied().unwrap_or(10.0) as usize;

    let model = MlpSpec::new(
        &[2, 32, 32, 2],
        Activation::Relu,
        LossKind::SoftmaxCrossEntropy,
        0,
    );
    let mut config = RunConfig::new(model, DatasetSpec::blobs(2000, 2, 0.8), eta, 32, epochs);
    config.eval_every = eval_every;

    let start = Instant::now();
    let out = run_training(&config).expect("valid config");
    println!(
        "{} checkpoints in {:.1?}",
        out.records.len(),
        start.elapsed()
    );
    println!(
        "{:>6} {:>8} {:>7} {:>10} {:>10} {:>8} {:>10}",
        "step", "loss", "acc", "lambda_k1", "lambda_h1", "cond", "dloss"
    );
    let stride = (out.records.len() / 25).max(1);
    for r in out.records.iter().step_by(stride) {
        let f = |x: Option<f64>| x.map_or("null".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:>6} {:>8} {:>7} {:>10} {:>10} {:>8} {:>10}",
            r.step,
            f(r.train_loss),
            f(r.train_acc),
            f(r.lambda_k1),
            f(r.lambda_h1()),
            f(r.cond_ratio),
            f(r.delta_loss)
        );
    }
    let s = &out.summary;
    println!(
        "max lambda_k1 {:?} at step {:?}; max lambda_h1 {:?}; max cond_ratio {:?}; threshold epoch {:?}",
        s.max_lambda_k1, s.max_lambda_k1_step, s.max_lambda_h1, s.max_cond_ratio, s.threshold_epoch
    );
    if let Ok(ind) = breakeven_indicators(&out.records) {
        println!(
            "argmax lambda_k1 step {}, first negative dloss step {:?}, early pearson {:?}",
            ind.argmax_lambda_k1_step,
            ind.first_negative_delta_loss_step,
            ind.lambda_k1_lambda_h1_pearson
        );
    }
}
