//! Top Hessian eigenvalues of a small network: Lanczos over Pearlmutter
//! products, compared with a dense Jacobi solve of the explicit Hessian.
//!
//!     cargo run --release --example hessian_lanczos

use breakeven::linalg::{jacobi_eigh, DenseSymmetric};
use breakeven::netmodel::{
    hessian_operator, Activation, BnMode, HvpMethod, LossKind, MlpSpec, ParamVector,
};
use breakeven::spectra::hessian_spectrum;
use breakeven::trainer::{make_dataset, DatasetSpec};

fn main() {
    let spec = MlpSpec::new(
        &[2, 6, 6, 2],
        Activation::Tanh,
        LossKind::SoftmaxCrossEntropy,
        1,
    );
    let theta = spec.init_params().expect("valid spec");
    let data = make_dataset(&DatasetSpec::blobs(200, 2, 0.6)).expect("valid dataset");
    let batch = data.train_batch();
    let d = theta.len();

    let h = hessian_spectrum(
        &spec,
        &theta,
        &batch,
        BnMode::BatchStats,
        5,
        HvpMethod::Pearlmutter,
        d,
        7,
    )
    .unwrap();
    println!("lanczos top-5 ({} params): {:.6?}", d, h.values);

    // explicit Hessian one column at a time
    let op = hessian_operator(
        &spec,
        &theta,
        &batch,
        HvpMethod::Pearlmutter,
        BnMode::BatchStats,
    )
    .unwrap();
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let mut e = ParamVector::zeros(d);
        e.as_mut_slice()[j] = 1.0;
        cols.push(op.hvp(&e).unwrap().into_vec());
    }
    let dense = DenseSymmetric::from_fn(d, |i, j| 0.5 * (cols[j][i] + cols[i][j])).unwrap();
    let exact = jacobi_eigh(&dense).unwrap();
    println!("jacobi  top-5: {:.6?}", &exact.values[..5]);
    println!(
        "smallest eigenvalue {:.6} (negative curvature: {})",
        exact.values[d - 1],
        exact.has_negative()
    );

    let fd = hessian_spectrum(
        &spec,
        &theta,
        &batch,
        BnMode::BatchStats,
        1,
        HvpMethod::Fd,
        30,
        7,
    )
    .unwrap();
    println!("finite-difference lanczos top-1: {:.6}", fd.values[0]);
}
