//! Gradient-covariance and Hessian spectra.
//!
//! The covariance `K` of minibatch gradients is never formed. With `L`
//! sampled gradients `g_i` and their mean `g`, the `L x L` Gram matrix
//! `G_ij = <g_i - g, g_j - g> / L` has the same non-zero spectrum as
//! `K = (1/L) sum_i (g_i - g)(g_i - g)^T`, and an eigenvector `u` of `G`
//! maps to the ambient eigenvector `sum_i u_i (g_i - g)` of `K`.

use crate::linalg::{
    self, canonical_sign, jacobi_eigh, lanczos_topk, DenseSymmetric, EigenPairs, LinalgError,
};
use crate::netmodel::{
    self, hessian_operator, Batch, BnMode, HvpMethod, MlpSpec, NetError, ParamVector,
};
use crate::rng;
use crate::stats;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues below this are treated as zero when counting the rank of `K`.
pub const POSITIVE_EIG: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("minibatch size {m} exceeds dataset size {n}")]
    InsufficientData { m: usize, n: usize },
    #[error("need at least two gradient samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("only {available} positive covariance eigenvalues, {wanted} requested")]
    RankDeficient { wanted: usize, available: usize },
    #[error("gradient has (almost) no component in the subspace")]
    DegenerateProjection,
    #[error("need at least {needed} checkpoints, got {got}")]
    InsufficientCheckpoints { needed: usize, got: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchGradients {
    pub grads: Vec<ParamVector>,
    /// Mean of the sampled gradients.
    pub mean: ParamVector,
}

/// Draws `l` independent minibatches of size `m` (without replacement inside
/// a batch) and returns their mean-loss gradients.
pub fn sample_minibatch_gradients(
    spec: &MlpSpec,
    theta: &ParamVector,
    data: &Batch,
    mode: BnMode<'_>,
    l: usize,
    m: usize,
    seed: u64,
) -> Result<MinibatchGradients, SpectraError> {
    if l < 2 {
        return Err(SpectraError::TooFewSamples(l));
    }
    let n = data.len();
    if m == 0 || m > n {
        return Err(SpectraError::InsufficientData { m, n });
    }
    let mut r = rng::rng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut grads = Vec::with_capacity(l);
    for _ in 0..l {
        rng::partial_shuffle(&mut r, &mut idx, m);
        let mut chosen = idx[..m].to_vec();
        chosen.sort_unstable();
        grads.push(netmodel::grad(spec, theta, &data.select(&chosen), mode)?);
    }
    let mean = mean_of(&grads)?;
    Ok(MinibatchGradients { grads, mean })
}

fn mean_of(grads: &[ParamVector]) -> Result<ParamVector, SpectraError> {
    let d = grads.first().map_or(0, |g| g.len());
    let mut mean = vec![0.0; d];
    for g in grads {
        if g.len() != d {
            return Err(SpectraError::DimensionMismatch {
                expected: d,
                got: g.len(),
            });
        }
        linalg::axpy(1.0, &g.0, &mut mean);
    }
    linalg::scale(1.0 / grads.len() as f64, &mut mean);
    Ok(ParamVector(mean))
}

/// Centered Gram matrix of `L` gradient samples, scaled by `1/L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    matrix: DenseSymmetric,
}

impl GramMatrix {
    pub fn samples(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &DenseSymmetric {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

fn centered(grads: &[ParamVector], mean: &ParamVector) -> Result<Vec<Vec<f64>>, SpectraError> {
    grads
        .iter()
        .map(|g| {
            if g.len() != mean.len() {
                return Err(SpectraError::DimensionMismatch {
                    expected: mean.len(),
                    got: g.len(),
                });
            }
            Ok(g.0.iter().zip(&mean.0).map(|(a, b)| a - b).collect())
        })
        .collect()
}

pub fn gram_from_gradients(
    grads: &[ParamVector],
    mean: &ParamVector,
) -> Result<GramMatrix, SpectraError> {
    let l = grads.len();
    if l < 2 {
        return Err(SpectraError::TooFewSamples(l));
    }
    let c = centered(grads, mean)?;
    let mut e = vec![0.0; l * l];
    for i in 0..l {
        for j in i..l {
            let v = linalg::dot(&c[i], &c[j]) / l as f64;
            e[i * l + j] = v;
            e[j * l + i] = v;
        }
    }
    Ok(GramMatrix {
        matrix: DenseSymmetric::new(l, e)?,
    })
}

/// Spectrum of `K` recovered from its Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpectrum {
    pub lambda_k1: f64,
    /// Smallest eigenvalue once the single null direction left by centering is dropped.
    pub lambda_k_star: f64,
    pub trace_k: f64,
    /// `lambda_k_star / lambda_k1`, `None` when `lambda_k1 < 1e-12`.
    pub cond_ratio: Option<f64>,
    /// Full Gram spectrum, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Gram-space eigenpairs (unclamped values).
    pub gram_pairs: EigenPairs,
}

pub fn k_spectrum(gram: &GramMatrix) -> Result<KSpectrum, SpectraError> {
    let pairs = jacobi_eigh(&gram.matrix)?;
    let eigenvalues: Vec<f64> = pairs.values.iter().map(|v| v.max(0.0)).collect();
    let lambda_k1 = eigenvalues[0];
    let l = eigenvalues.len();
    // ascending index 1 == descending index l-2
    let lambda_k_star = eigenvalues[l - 2];
    let cond_ratio = (lambda_k1 >= POSITIVE_EIG).then(|| lambda_k_star / lambda_k1);
    Ok(KSpectrum {
        lambda_k1,
        lambda_k_star,
        trace_k: gram.trace(),
        cond_ratio,
        eigenvalues,
        gram_pairs: pairs,
    })
}

/// Ambient-space eigenvectors of `K` for the top `k` Gram eigenpairs.
pub fn k_top_eigvecs(
    grads: &[ParamVector],
    mean: &ParamVector,
    spectrum: &KSpectrum,
    k: usize,
) -> Result<Vec<Vec<f64>>, SpectraError> {
    let l = grads.len();
    if k > l.saturating_sub(1) {
        return Err(SpectraError::RankDeficient {
            wanted: k,
            available: l.saturating_sub(1),
        });
    }
    let available = spectrum
        .gram_pairs
        .values
        .iter()
        .filter(|&&v| v >= POSITIVE_EIG)
        .count();
    if available < k {
        return Err(SpectraError::RankDeficient {
            wanted: k,
            available,
        });
    }
    let c = centered(grads, mean)?;
    let d = mean.len();
    Ok(spectrum.gram_pairs.vectors[..k]
        .iter()
        .map(|u| {
            let mut v = vec![0.0; d];
            for (ui, ci) in u.iter().zip(&c) {
                linalg::axpy(*ui, ci, &mut v);
            }
            let nv = linalg::norm2(&v);
            linalg::scale(1.0 / nv, &mut v);
            canonical_sign(&mut v);
            v
        })
        .collect())
}

/// `‖g‖ / ‖P g‖` for the orthogonal projector `P` onto `span(top_vecs)`.
/// Exactly 1 when the residual is below `1e-10 ‖g‖`.
pub fn grad_subspace_ratio(g: &[f64], top_vecs: &[Vec<f64>]) -> Result<f64, SpectraError> {
    let (proj, resid) = linalg::project_onto_subspace(g, top_vecs)?;
    let ng = linalg::norm2(g);
    let np = linalg::norm2(&proj);
    if ng == 0.0 || np < 1e-12 * ng {
        return Err(SpectraError::DegenerateProjection);
    }
    if linalg::norm2(&resid) < 1e-10 * ng {
        return Ok(1.0);
    }
    Ok((ng / np).max(1.0))
}

/// Covariance-side metrics of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub lambda_k1: f64,
    pub lambda_k_star: f64,
    pub trace_k: f64,
    pub cond_ratio: Option<f64>,
    pub gram_spectrum: Vec<f64>,
    #[serde(skip)]
    pub top_eigvecs_k: Vec<Vec<f64>>,
}

/// Full covariance summary from gradient samples.
///
/// Samples are put in a canonical (lexicographic) order first, so any
/// permutation of the same samples yields a bitwise-identical summary.
/// Up to `top_k` ambient eigenvectors are returned, fewer if `K` has lower rank.
pub fn covariance_summary(
    grads: &[ParamVector],
    top_k: usize,
) -> Result<CovarianceSummary, SpectraError> {
    let mut sorted: Vec<&ParamVector> = grads.iter().collect();
    sorted.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted: Vec<ParamVector> = sorted.into_iter().cloned().collect();
    let mean = mean_of(&sorted)?;
    let gram = gram_from_gradients(&sorted, &mean)?;
    let spec = k_spectrum(&gram)?;
    let available = spec
        .gram_pairs
        .values
        .iter()
        .filter(|&&v| v >= POSITIVE_EIG)
        .count();
    let k = top_k.min(available).min(sorted.len() - 1);
    let top = k_top_eigvecs(&sorted, &mean, &spec, k)?;
    Ok(CovarianceSummary {
        lambda_k1: spec.lambda_k1,
        lambda_k_star: spec.lambda_k_star,
        trace_k: spec.trace_k,
        cond_ratio: spec.cond_ratio,
        gram_spectrum: spec.eigenvalues,
        top_eigvecs_k: top,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSpectrum {
    /// Top-k algebraic Ritz values, descending.
    pub values: Vec<f64>,
    #[serde(skip)]
    pub top_vector: Vec<f64>,
    pub any_negative: bool,
    pub method: HvpMethod,
    pub seed: u64,
    pub subset_size: usize,
}

/// Top-k Hessian eigenvalues of the mean loss over `eval_subset` via Lanczos.
#[allow(clippy::too_many_arguments)]
pub fn hessian_spectrum(
    spec: &MlpSpec,
    theta: &ParamVector,
    eval_subset: &Batch,
    mode: BnMode<'_>,
    k: usize,
    method: HvpMethod,
    max_iters: usize,
    seed: u64,
) -> Result<HessianSpectrum, SpectraError> {
    let op = hessian_operator(spec, theta, eval_subset, method, mode)?;
    let pairs = lanczos_topk(&op, k, max_iters, seed)?;
    Ok(HessianSpectrum {
        any_negative: pairs.has_negative(),
        top_vector: pairs.vectors[0].clone(),
        values: pairs.values,
        method,
        seed,
        subset_size: eval_subset.len(),
    })
}

/// Largest eigenvalue of a Gram matrix; Lanczos once the matrix is large.
pub fn top_gram_eigenvalue(gram: &GramMatrix, seed: u64) -> Result<f64, SpectraError> {
    let l = gram.samples();
    let top = if l <= 64 {
        jacobi_eigh(&gram.matrix)?.values[0]
    } else {
        lanczos_topk(&gram.matrix, 1, l.min(100), seed)?.values[0]
    };
    Ok(top.max(0.0))
}

pub const MIN_SENSITIVITY_CHECKPOINTS: usize = 10;

/// A parameter snapshot plus the BN statistics it should be evaluated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub theta: ParamVector,
    pub bn_stats: Vec<netmodel::BnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MSensitivity {
    pub batch_sizes: Vec<usize>,
    pub sample_counts: Vec<usize>,
    /// One `lambda_k1` series per minibatch size, indexed by checkpoint.
    pub series: Vec<Vec<f64>>,
    /// Pearson r between the first two series; `None` for zero variance.
    pub pearson: Option<f64>,
}

/// Tracks `lambda_k1` across checkpoints for several minibatch sizes while
/// keeping `L * M = total_examples` fixed, and correlates the first two series.
pub fn m_sensitivity_report(
    spec: &MlpSpec,
    checkpoints: &[Checkpoint],
    data: &Batch,
    batch_sizes: &[usize],
    total_examples: usize,
    seed: u64,
) -> Result<MSensitivity, SpectraError> {
    if checkpoints.len() < MIN_SENSITIVITY_CHECKPOINTS {
        return Err(SpectraError::InsufficientCheckpoints {
            needed: MIN_SENSITIVITY_CHECKPOINTS,
            got: checkpoints.len(),
        });
    }
    let sample_counts: Vec<usize> = batch_sizes
        .iter()
        .map(|&m| (total_examples / m.max(1)).max(2))
        .collect();
    let mut series = vec![Vec::with_capacity(checkpoints.len()); batch_sizes.len()];
    for (c, cp) in checkpoints.iter().enumerate() {
        let mode = if spec.any_bn() {
            BnMode::Frozen(&cp.bn_stats)
        } else {
            BnMode::BatchStats
        };
        for (j, (&m, &l)) in batch_sizes.iter().zip(&sample_counts).enumerate() {
            let s = rng::derive_seed(seed, &[c as u64, j as u64]);
            let mg = sample_minibatch_gradients(spec, &cp.theta, data, mode, l, m, s)?;
            let gram = gram_from_gradients(&mg.grads, &mg.mean)?;
            series[j].push(top_gram_eigenvalue(&gram, s)?);
        }
    }
    let pearson = if series.len() >= 2 {
        stats::pearson(&series[0], &series[1])
    } else {
        None
    };
    Ok(MSensitivity {
        batch_sizes: batch_sizes.to_vec(),
        sample_counts,
        series,
        pearson,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Activation, LossKind};

    fn rand_grads(seed: u64, l: usize, d: usize) -> Vec<ParamVector> {
        let mut r = rng::rng(seed);
        (0..l)
            .map(|_| ParamVector(rng::normal_vec(&mut r, d)))
            .collect()
    }

    fn dense_covariance(grads: &[ParamVector], mean: &ParamVector) -> DenseSymmetric {
        let d = mean.len();
        let l = grads.len() as f64;
        let mut k = vec![0.0; d * d];
        for g in grads {
            let c: Vec<f64> = g.0.iter().zip(&mean.0).map(|(a, b)| a - b).collect();
            for i in 0..d {
                for j in 0..d {
                    k[i * d + j] += c[i] * c[j] / l;
                }
            }
        }
        DenseSymmetric::new(d, k).unwrap()
    }

    #[test]
    fn identical_gradients_give_zero_gram() {
        let g = ParamVector(vec![1.0, -2.0, 3.0]);
        let grads = vec![g.clone(), g.clone(), g.clone()];
        let gram = gram_from_gradients(&grads, &g).unwrap();
        assert!(gram.matrix().entries().iter().all(|&x| x == 0.0));
        let s = k_spectrum(&gram).unwrap();
        assert_eq!((s.lambda_k1, s.lambda_k_star, s.trace_k), (0.0, 0.0, 0.0));
        assert_eq!(s.cond_ratio, None);
    }

    #[test]
    fn antipodal_pair() {
        let v = vec![3.0, 4.0];
        let grads = vec![ParamVector(v.clone()), ParamVector(vec![-3.0, -4.0])];
        let zero = ParamVector(vec![0.0, 0.0]);
        let gram = gram_from_gradients(&grads, &zero).unwrap();
        assert_eq!(gram.matrix().entries(), &[12.5, -12.5, -12.5, 12.5]);
        let s = k_spectrum(&gram).unwrap();
        assert!((s.lambda_k1 - 25.0).abs() < 1e-12);
        assert!(s.eigenvalues[1].abs() < 1e-12);
        // with one null direction dropped, the single remaining eigenvalue is also the smallest
        assert_eq!(s.lambda_k_star, s.lambda_k1);
        let vecs = k_top_eigvecs(&grads, &zero, &s, 1).unwrap();
        assert!((vecs[0][0].abs() - 0.6).abs() < 1e-12 && (vecs[0][1].abs() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn isotropic_block() {
        let gram = GramMatrix {
            matrix: DenseSymmetric::diagonal(&[0.0, 2.0, 2.0, 2.0]).unwrap(),
        };
        let s = k_spectrum(&gram).unwrap();
        assert_eq!(s.lambda_k1, 2.0);
        assert_eq!(s.lambda_k_star, 2.0);
        assert_eq!(s.cond_ratio, Some(1.0));
        assert_eq!(s.trace_k, 6.0);
    }

    #[test]
    fn gram_matches_dense_covariance() {
        let grads = rand_grads(1, 6, 40);
        let mean = mean_of(&grads).unwrap();
        let gram = gram_from_gradients(&grads, &mean).unwrap();
        let s = k_spectrum(&gram).unwrap();
        let dense = jacobi_eigh(&dense_covariance(&grads, &mean)).unwrap();
        for i in 0..5 {
            assert!((s.eigenvalues[i] - dense.values[i]).abs() < 1e-10);
        }
        let tr: f64 = s.eigenvalues.iter().sum();
        assert!((tr - s.trace_k).abs() <= 1e-9 * s.trace_k);
    }

    #[test]
    fn ambient_vectors_are_eigenvectors() {
        let grads = rand_grads(2, 8, 30);
        let mean = mean_of(&grads).unwrap();
        let s = k_spectrum(&gram_from_gradients(&grads, &mean).unwrap()).unwrap();
        let vecs = k_top_eigvecs(&grads, &mean, &s, 5).unwrap();
        let k = dense_covariance(&grads, &mean);
        for (v, lam) in vecs.iter().zip(&s.eigenvalues) {
            let kv = k.matvec(v);
            let r: f64 = kv
                .iter()
                .zip(v)
                .map(|(a, b)| (a - lam * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r < 1e-8);
        }
        for i in 0..5 {
            for j in 0..5 {
                let d = linalg::dot(&vecs[i], &vecs[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-8);
            }
        }
        assert!(matches!(
            k_top_eigvecs(&grads, &mean, &s, 8),
            Err(SpectraError::RankDeficient { .. })
        ));
    }

    #[test]
    fn duplicated_sample_matches_weighted_dense() {
        let mut grads = rand_grads(3, 4, 10);
        grads.push(grads[0].clone());
        let summary = covariance_summary(&grads, 3).unwrap();
        let mean = mean_of(&grads).unwrap();
        let dense = jacobi_eigh(&dense_covariance(&grads, &mean)).unwrap();
        for i in 0..4 {
            assert!((summary.gram_spectrum[i] - dense.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn permutation_invariance_is_bitwise() {
        let grads = rand_grads(4, 7, 12);
        let mut perm = grads.clone();
        perm.reverse();
        perm.swap(0, 3);
        assert_eq!(
            covariance_summary(&grads, 5).unwrap(),
            covariance_summary(&perm, 5).unwrap()
        );
    }

    #[test]
    fn subspace_ratio_cases() {
        let b = vec![vec![1.0, 0.0, 0.0]];
        assert_eq!(grad_subspace_ratio(&[2.0, 0.0, 0.0], &b).unwrap(), 1.0);
        let r = grad_subspace_ratio(&[1.0, 1.0, 0.0], &b).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            grad_subspace_ratio(&[0.0, 1.0, 0.0], &b).unwrap_err(),
            SpectraError::DegenerateProjection
        );
    }

    fn tiny_problem() -> (MlpSpec, ParamVector, Batch) {
        let spec = MlpSpec::new(
            &[2, 4, 2],
            Activation::Tanh,
            LossKind::SoftmaxCrossEntropy,
            3,
        );
        let theta = spec.init_params().unwrap();
        let mut r = rng::rng(1);
        let x = rng::normal_vec(&mut r, 24);
        let y = (0..12).map(|i| i % 2).collect();
        (spec, theta, Batch::classification(x, 2, y))
    }

    #[test]
    fn full_dataset_minibatches_have_zero_covariance() {
        let (spec, theta, data) = tiny_problem();
        let mg =
            sample_minibatch_gradients(&spec, &theta, &data, BnMode::BatchStats, 4, 12, 0).unwrap();
        let full = netmodel::grad(&spec, &theta, &data, BnMode::BatchStats).unwrap();
        for g in &mg.grads {
            for (a, b) in g.0.iter().zip(&full.0) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        let s = covariance_summary(&mg.grads, 5).unwrap();
        assert!(s.lambda_k1 < 1e-28);
        assert!(matches!(
            sample_minibatch_gradients(&spec, &theta, &data, BnMode::BatchStats, 4, 13, 0),
            Err(SpectraError::InsufficientData { .. })
        ));
        let one = data.select(&[5]);
        let mg =
            sample_minibatch_gradients(&spec, &theta, &one, BnMode::BatchStats, 3, 1, 0).unwrap();
        assert!(covariance_summary(&mg.grads, 5).unwrap().lambda_k1 < 1e-28);
    }

    struct Scaled<'a>(f64, &'a netmodel::HessianOperator);
    impl linalg::LinearOperator for Scaled<'_> {
        fn dim(&self) -> usize {
            linalg::LinearOperator::dim(self.1)
        }
        fn apply(&self, v: &[f64]) -> Vec<f64> {
            linalg::LinearOperator::apply(self.1, v)
                .into_iter()
                .map(|x| self.0 * x)
                .collect()
        }
    }

    #[test]
    fn scaled_loss_scales_spectrum() {
        let (spec, theta, data) = tiny_problem();
        let op = hessian_operator(
            &spec,
            &theta,
            &data,
            HvpMethod::Pearlmutter,
            BnMode::BatchStats,
        )
        .unwrap();
        let base = hessian_spectrum(
            &spec,
            &theta,
            &data,
            BnMode::BatchStats,
            3,
            HvpMethod::Pearlmutter,
            22,
            4,
        )
        .unwrap();
        let tripled = lanczos_topk(&Scaled(3.0, &op), 3, 22, 4).unwrap();
        for (a, b) in base.values.iter().zip(&tripled.values) {
            assert!((3.0 * a - b).abs() <= 1e-8 * b.abs());
        }
    }

    #[test]
    fn pearlmutter_and_fd_agree_on_top_eigenvalue() {
        let (spec, theta, data) = tiny_problem();
        let p = hessian_spectrum(
            &spec,
            &theta,
            &data,
            BnMode::BatchStats,
            1,
            HvpMethod::Pearlmutter,
            22,
            4,
        )
        .unwrap();
        let f = hessian_spectrum(
            &spec,
            &theta,
            &data,
            BnMode::BatchStats,
            1,
            HvpMethod::Fd,
            22,
            4,
        )
        .unwrap();
        assert!((p.values[0] - f.values[0]).abs() <= 1e-3 * p.values[0].abs());
    }

    #[test]
    fn sensitivity_needs_checkpoints_and_handles_constant_series() {
        let (spec, theta, data) = tiny_problem();
        let cp = Checkpoint {
            theta,
            bn_stats: vec![],
        };
        let few = vec![cp.clone(); 3];
        assert!(matches!(
            m_sensitivity_report(&spec, &few, &data, &[1, 12], 24, 0),
            Err(SpectraError::InsufficientCheckpoints { .. })
        ));
        // M equal to the dataset size gives an identically zero series
        let many = vec![cp; 10];
        let rep = m_sensitivity_report(&spec, &many, &data, &[1, 12], 24, 0).unwrap();
        assert!(rep.series[1].iter().all(|&x| x < 1e-28));
        assert_eq!(rep.pearson, None);
    }
}
