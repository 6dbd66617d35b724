use breakeven::linalg::{jacobi_eigh, lanczos_topk, DenseSymmetric};
use breakeven::netmodel::{
    grad, per_example_grads, Activation, Batch, BnMode, LossKind, MlpSpec, ParamVector,
};
use breakeven::quadratic::{
    breakeven_curvature_closed_form, coupled_lhs, simulate_sgd, stability_lhs, QuadraticModel,
    SgdSetting,
};
use breakeven::spectra::{grad_subspace_ratio, gram_from_gradients, k_spectrum, k_top_eigvecs};
use proptest::prelude::*;

fn symmetric(n: usize, raw: &[f64]) -> DenseSymmetric {
    DenseSymmetric::from_fn(n, |i, j| 0.5 * (raw[i * n + j] + raw[j * n + i])).unwrap()
}

fn matrix() -> impl Strategy<Value = DenseSymmetric> {
    (1usize..12).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |raw| symmetric(n, &raw))
    })
}

fn gradients() -> impl Strategy<Value = Vec<ParamVector>> {
    (2usize..10, 1usize..20).prop_flat_map(|(l, d)| {
        prop::collection::vec(
            prop::collection::vec(-3.0f64..3.0, d).prop_map(ParamVector),
            l,
        )
    })
}

fn mean_of(grads: &[ParamVector]) -> ParamVector {
    let d = grads[0].len();
    ParamVector(
        (0..d)
            .map(|j| grads.iter().map(|g| g.0[j]).sum::<f64>() / grads.len() as f64)
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobi_preserves_trace(a in matrix()) {
        let e = jacobi_eigh(&a).unwrap();
        let sum: f64 = e.values.iter().sum();
        prop_assert!((sum - a.trace()).abs() < 1e-9 * a.trace().abs().max(1.0));
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn lanczos_top_is_bracketed_and_deterministic(a in matrix(), seed in any::<u64>()) {
        let n = a.dim();
        let top = jacobi_eigh(&a).unwrap().values[0];
        let r = lanczos_topk(&a, 1, n, seed).unwrap();
        prop_assert!(r.values[0] <= top + 1e-8);
        prop_assert!(r.values[0] >= top - 1e-6);
        prop_assert_eq!(r, lanczos_topk(&a, 1, n, seed).unwrap());
    }

    #[test]
    fn k_spectrum_ordering_and_permutation(grads in gradients(), rot in 0usize..10) {
        let mean = mean_of(&grads);
        let k = k_spectrum(&gram_from_gradients(&grads, &mean).unwrap()).unwrap();
        let nonzero: Vec<f64> = k.eigenvalues.iter().copied().filter(|&v| v > 1e-12).collect();
        if !nonzero.is_empty() {
            let avg = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
            prop_assert!(k.lambda_k_star <= avg + 1e-12 && avg <= k.lambda_k1 + 1e-12);
        }
        if let Some(c) = k.cond_ratio {
            prop_assert!((0.0..=1.0).contains(&c));
        }
        // trace equals the mean squared deviation
        let direct: f64 = grads
            .iter()
            .map(|g| g.0.iter().zip(&mean.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / grads.len() as f64;
        prop_assert!((k.trace_k - direct).abs() <= 1e-9 * direct.max(1e-12));

        let mut rotated = grads.clone();
        rotated.rotate_left(rot % grads.len());
        let k2 = k_spectrum(&gram_from_gradients(&rotated, &mean).unwrap()).unwrap();
        prop_assert!(k.eigenvalues.iter().zip(&k2.eigenvalues).all(|(a, b)| (a - b).abs() <= 1e-12 * k.lambda_k1.max(1e-12)));
    }

    #[test]
    fn subspace_ratio_at_least_one(grads in gradients(), g in prop::collection::vec(-3.0f64..3.0, 20)) {
        let mean = mean_of(&grads);
        let d = mean.len();
        let k = k_spectrum(&gram_from_gradients(&grads, &mean).unwrap()).unwrap();
        if let Ok(vecs) = k_top_eigvecs(&grads, &mean, &k, 1) {
            if let Ok(r) = grad_subspace_ratio(&g[..d], &vecs) {
                prop_assert!(r >= 1.0);
            }
        }
    }

    #[test]
    fn full_batch_sgd_is_geometric(eta in 0.01f64..1.5, psi0 in -5.0f64..5.0, seed in any::<u64>()) {
        let m = QuadraticModel::uniform(20, 0.1, 2.0, 0.5, seed).unwrap();
        let t = simulate_sgd(&m, &SgdSetting::new(eta, 20), psi0, 50, seed, f64::INFINITY).unwrap();
        let q = 1.0 - eta * m.lambda_h();
        for (k, v) in t.values.iter().enumerate() {
            let expect = m.psi_star() + (psi0 - m.psi_star()) * q.powi(k as i32);
            prop_assert!((v - expect).abs() <= 1e-12 * expect.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn stability_lhs_shrinks_with_batch_size(eta in 0.01f64..2.0, seed in any::<u64>()) {
        let m = QuadraticModel::uniform(50, 0.0, 2.0, 0.5, seed).unwrap();
        let lhs: Vec<f64> = (1..=50).map(|s| stability_lhs(&m, &SgdSetting::new(eta, s)).unwrap()).collect();
        prop_assert!(lhs.windows(2).all(|w| w[0] >= w[1]));
        let mean_step = (1.0 - eta * m.lambda_h()).powi(2);
        prop_assert!((lhs[49] - mean_step).abs() <= 1e-12 * mean_step.max(1.0));
    }

    #[test]
    fn closed_form_sits_on_the_boundary(
        eta in 0.01f64..1.0,
        s in 1usize..100,
        alpha in 0.0f64..2.0,
        psi in 0.5f64..3.0,
    ) {
        let b = breakeven_curvature_closed_form(eta, s, 100, alpha, psi).unwrap();
        prop_assume!(!b.non_positive);
        let lhs = coupled_lhs(eta, s, 100, alpha, b.lambda, psi);
        prop_assert!((lhs - 1.0).abs() < 1e-9);
    }

    #[test]
    fn per_example_grads_average_to_batch_grad(seed in 0u64..1000, n in 1usize..12) {
        let spec = MlpSpec::new(&[3, 5, 2], Activation::Tanh, LossKind::SoftmaxCrossEntropy, seed);
        let theta = spec.init_params().unwrap();
        prop_assert_eq!(&theta, &spec.init_params().unwrap());
        let mut r = breakeven::rng::rng(seed);
        let x = breakeven::rng::normal_vec(&mut r, n * 3);
        let batch = Batch::classification(x, 3, (0..n).map(|i| i % 2).collect());
        let per = per_example_grads(&spec, &theta, &batch, BnMode::BatchStats).unwrap();
        let full = grad(&spec, &theta, &batch, BnMode::BatchStats).unwrap();
        for j in 0..theta.len() {
            let m = per.iter().map(|g| g.0[j]).sum::<f64>() / n as f64;
            prop_assert!((m - full.0[j]).abs() <= 1e-12 * full.0[j].abs().max(1.0));
        }
    }
}
