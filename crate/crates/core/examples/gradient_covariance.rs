//! Spectrum of the minibatch gradient covariance K at initialization,
//! computed through the L x L Gram matrix and checked against the dense
//! D x D covariance.
//!
//!     cargo run --release --example gradient_covariance -- [L] [M]

use breakeven::linalg::{jacobi_eigh, DenseSymmetric};
use breakeven::netmodel::{Activation, BnMode, LossKind, MlpSpec};
use breakeven::spectra::{gram_from_gradients, k_spectrum, sample_minibatch_gradients};
use breakeven::trainer::{make_dataset, DatasetSpec};

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer"))
        .collect();
    let l = args.first().copied().unwrap_or(25);
    let m = args.get(1).copied().unwrap_or(16);

    let spec = MlpSpec::new(
        &[2, 8, 2],
        Activation::Relu,
        LossKind::SoftmaxCrossEntropy,
        0,
    );
    let theta = spec.init_params().expect("valid spec");
    let data = make_dataset(&DatasetSpec::blobs(600, 2, 1.0)).expect("valid dataset");
    let train = data.train_batch();
    let g = sample_minibatch_gradients(&spec, &theta, &train, BnMode::BatchStats, l, m, 5).unwrap();
    let gram = gram_from_gradients(&g.grads, &g.mean).unwrap();
    let k = k_spectrum(&gram).unwrap();
    println!("L={l} M={m} D={}", theta.len());
    println!(
        "lambda_k1 {:.6e}  lambda_k* {:.6e}  tr K {:.6e}  cond {:?}",
        k.lambda_k1, k.lambda_k_star, k.trace_k, k.cond_ratio
    );

    // the dense route, only sensible because D is small here
    let d = theta.len();
    let centered: Vec<Vec<f64>> = g
        .grads
        .iter()
        .map(|x| x.0.iter().zip(&g.mean.0).map(|(a, b)| a - b).collect())
        .collect();
    let dense = DenseSymmetric::from_fn(d, |i, j| {
        centered.iter().map(|c| c[i] * c[j]).sum::<f64>() / l as f64
    })
    .unwrap();
    let full = jacobi_eigh(&dense).unwrap();
    println!("dense top-5 {:.6?}", &full.values[..5]);
    println!("gram  top-5 {:.6?}", &k.eigenvalues[..5]);
}
