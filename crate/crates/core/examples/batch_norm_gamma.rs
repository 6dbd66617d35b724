//! Trains the same batch-normalized network at a small and a large learning
//! rate and prints the norm of each BN scale vector over the first epochs.
//!
//!     cargo run --release --example batch_norm_gamma -- [epochs]

use breakeven::netmodel::{Activation, LossKind, MlpSpec};
use breakeven::trainer::{run_training, DatasetSpec, RunConfig};

fn main() {
    let epochs = std::env::args()
        .nth(1)
        .map_or(5, |a| a.parse().expect("integer"));
    let model = MlpSpec::new(
        &[2, 32, 32, 2],
        Activation::Relu,
        LossKind::SoftmaxCrossEntropy,
        0,
    )
    .with_batch_norm();
    for eta in [0.01, 0.2] {
        let mut cfg = RunConfig::new(
            model.clone(),
            DatasetSpec::blobs(1000, 2, 0.8),
            eta,
            32,
            epochs,
        );
        cfg.eval_every = 28;
        cfg.spectra.lanczos_iters = 15;
        let out = run_training(&cfg).expect("valid config");
        println!("eta = {eta}");
        for r in &out.records {
            let norms: Vec<String> = r.bn_gamma_norms.iter().map(|g| format!("{g:.4}")).collect();
            println!(
                "  epoch {:5.2}  gamma norms [{}]  lambda_k1 {:.4?}",
                r.epoch,
                norms.join(", "),
                r.lambda_k1
            );
        }
    }
}
