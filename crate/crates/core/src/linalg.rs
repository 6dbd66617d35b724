//! Dense symmetric eigensolvers and Lanczos iteration.
//!
//! Everything here is f64. [`jacobi_eigh`] diagonalizes small dense
//! matrices (Gram matrices, Lanczos tridiagonals, test oracles);
//! [`lanczos_topk`] extracts the algebraically largest eigenpairs of an
//! implicit symmetric operator such as a Hessian.

use crate::rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix or vector contains non-finite entries")]
    NonFinite,
    #[error("jacobi did not converge: off-diagonal norm {off:e} after {sweeps} sweeps")]
    NoConvergence { off: f64, sweeps: usize },
    #[error("requested k = {k} eigenpairs but at most {max} are available")]
    InvalidK { k: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix dimension must be positive")]
    Empty,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Symmetric matrix in row-major storage. Construction symmetrizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric {
    dim: usize,
    entries: Vec<f64>,
}

impl DenseSymmetric {
    /// Builds from row-major entries, replacing `A` by `(A + Aᵀ)/2`.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        if entries.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let mut entries = entries;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let s = 0.5 * (entries[i * dim + j] + entries[j * dim + i]);
                entries[i * dim + j] = s;
                entries[j * dim + i] = s;
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, LinalgError> {
        let mut e = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                e.push(f(i, j));
            }
        }
        Self::new(dim, e)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self, LinalgError> {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.entries)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.dim)
            .map(|row| dot(row, v))
            .collect()
    }
}

/// A symmetric linear map given only through its action on vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DenseSymmetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matvec(v)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (**self).apply(v)
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
///
/// Each eigenvector is sign-normalized so its largest-magnitude component
/// (lowest index on ties) is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_negative(&self) -> bool {
        self.values.iter().any(|&v| v < 0.0)
    }

    fn from_unsorted(values: Vec<f64>, vectors: Vec<Vec<f64>>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        // stable sort keeps index order among exact ties
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let values = order.iter().map(|&i| values[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| {
                let mut v = vectors[i].clone();
                canonical_sign(&mut v);
                v
            })
            .collect();
        Self { values, vectors }
    }
}

pub(crate) fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        scale(-1.0, v);
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;

/// Full eigendecomposition by cyclic Jacobi rotations.
pub fn jacobi_eigh(a: &DenseSymmetric) -> Result<EigenPairs, LinalgError> {
    let n = a.dim;
    if a.entries.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let mut m = a.entries.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let fro = a.frobenius_norm();
    let tol = JACOBI_REL_TOL * fro;

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= tol {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { off, sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let values: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| v[i * n + j]).collect())
        .collect();
    Ok(EigenPairs::from_unsorted(values, vectors))
}

const LANCZOS_BREAKDOWN: f64 = 1e-13;

/// Top-k algebraically largest Ritz pairs of a symmetric operator.
///
/// Runs at most `max_iters` Lanczos steps with full reorthogonalization.
/// On breakdown (an invariant subspace was found) the iteration restarts
/// from a fresh random vector orthogonal to every previous Lanczos vector,
/// until either `max_iters` vectors exist or the whole space is spanned.
pub fn lanczos_topk<Op: LinearOperator + ?Sized>(
    op: &Op,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<EigenPairs, LinalgError> {
    let dim = op.dim();
    if dim == 0 {
        return Err(LinalgError::Empty);
    }
    let limit = dim.min(max_iters);
    if k == 0 || k > limit {
        return Err(LinalgError::InvalidK { k, max: limit });
    }
    let mut rng = rng::rng(seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(limit);
    let mut alphas: Vec<f64> = Vec::with_capacity(limit);
    let mut betas: Vec<f64> = Vec::with_capacity(limit);

    let mut q = fresh_direction(&mut rng, dim, &basis).ok_or(LinalgError::NonFinite)?;
    let mut scale_est: f64 = 0.0;
    loop {
        let mut w = op.apply(&q);
        if w.len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                got: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let alpha = dot(&w, &q);
        basis.push(q);
        alphas.push(alpha);
        // two passes of classical Gram-Schmidt against every Lanczos vector
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                axpy(-c, b, &mut w);
            }
        }
        let beta = norm2(&w);
        scale_est = scale_est.max(alpha.abs()).max(beta);
        if basis.len() == limit {
            break;
        }
        if beta < LANCZOS_BREAKDOWN * scale_est.max(1.0) {
            match fresh_direction(&mut rng, dim, &basis) {
                Some(f) => {
                    betas.push(0.0);
                    q = f;
                }
                None => break,
            }
        } else {
            scale(1.0 / beta, &mut w);
            betas.push(beta);
            q = w;
        }
    }

    let m = basis.len();
    let tri = DenseSymmetric::from_fn(m, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 {
            betas[i]
        } else if i == j + 1 {
            betas[j]
        } else {
            0.0
        }
    })?;
    let ritz = jacobi_eigh(&tri)?;
    let take = k.min(m);
    let mut values = Vec::with_capacity(take);
    let mut vectors = Vec::with_capacity(take);
    for idx in 0..take {
        let y = &ritz.vectors[idx];
        let mut x = vec![0.0; dim];
        for (coef, b) in y.iter().zip(&basis) {
            axpy(*coef, b, &mut x);
        }
        let nx = norm2(&x);
        scale(1.0 / nx, &mut x);
        values.push(ritz.values[idx]);
        vectors.push(x);
    }
    Ok(EigenPairs::from_unsorted(values, vectors))
}

/// Unit random vector orthogonal to `basis`, or `None` once the basis spans the space.
fn fresh_direction(rng: &mut rng::Rng, dim: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    if basis.len() >= dim {
        return None;
    }
    for _ in 0..8 {
        let mut v = rng::normal_vec(rng, dim);
        let n0 = norm2(&v);
        for _ in 0..2 {
            for b in basis {
                let c = dot(&v, b);
                axpy(-c, b, &mut v);
            }
        }
        let n1 = norm2(&v);
        if n1 > 1e-8 * n0 {
            scale(1.0 / n1, &mut v);
            return Some(v);
        }
    }
    None
}

/// Splits `v` into its orthogonal projection onto `span(basis)` and the residual.
pub fn project_onto_subspace(
    v: &[f64],
    basis: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let mut proj = vec![0.0; v.len()];
    for b in basis {
        if b.len() != v.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: v.len(),
                got: b.len(),
            });
        }
        axpy(dot(v, b), b, &mut proj);
    }
    let resid = v.iter().zip(&proj).map(|(a, p)| a - p).collect();
    Ok((proj, resid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(seed: u64, n: usize) -> DenseSymmetric {
        let mut r = rng::rng(seed);
        let raw = rng::normal_vec(&mut r, n * n);
        DenseSymmetric::new(n, raw).unwrap()
    }

    fn residual(a: &DenseSymmetric, lambda: f64, v: &[f64]) -> f64 {
        let av = a.matvec(v);
        av.iter()
            .zip(v)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn symmetrizes_on_construction() {
        let a = DenseSymmetric::new(2, vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            DenseSymmetric::new(1, vec![f64::NAN]).unwrap_err(),
            LinalgError::NonFinite
        );
    }

    #[test]
    fn diagonal_case() {
        let a = DenseSymmetric::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let e = jacobi_eigh(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vectors[1], vec![0.0, 1.0, 0.0]);
        assert_eq!(e.vectors[2], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = DenseSymmetric::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = jacobi_eigh(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_eight_by_eight_reconstructs() {
        let a = random_symmetric(11, 8);
        let e = jacobi_eigh(&a).unwrap();
        let scale = a.frobenius_norm().max(1.0);
        for (l, v) in e.values.iter().zip(&e.vectors) {
            assert!(residual(&a, *l, v) < 1e-10 * scale);
        }
        let mut recon = vec![0.0; 64];
        for (l, v) in e.values.iter().zip(&e.vectors) {
            for i in 0..8 {
                for j in 0..8 {
                    recon[i * 8 + j] += l * v[i] * v[j];
                }
            }
        }
        let err: f64 = recon
            .iter()
            .zip(a.entries())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9);
    }

    #[test]
    fn sign_convention_holds() {
        let a = random_symmetric(5, 6);
        let e = jacobi_eigh(&a).unwrap();
        for v in &e.vectors {
            let (imax, _) = v.iter().enumerate().fold((0, -1.0), |acc, (i, x)| {
                if x.abs() > acc.1 {
                    (i, x.abs())
                } else {
                    acc
                }
            });
            assert!(v[imax] > 0.0);
        }
    }

    #[test]
    fn jacobi_rejects_nonfinite_via_constructor_bypass() {
        let a = DenseSymmetric {
            dim: 1,
            entries: vec![f64::INFINITY],
        };
        assert_eq!(jacobi_eigh(&a).unwrap_err(), LinalgError::NonFinite);
    }

    #[test]
    fn zero_matrix() {
        let a = DenseSymmetric::new(3, vec![0.0; 9]).unwrap();
        let e = jacobi_eigh(&a).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
    }

    #[test]
    fn lanczos_diagonal_dominant() {
        let a = DenseSymmetric::diagonal(&[5.0, 3.0, 1.0]).unwrap();
        let e = lanczos_topk(&a, 1, 3, 0).unwrap();
        assert!((e.values[0] - 5.0).abs() < 1e-10);
        assert!((e.vectors[0][0] - 1.0).abs() < 1e-10);
    }

    struct Identity(usize);
    impl LinearOperator for Identity {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply(&self, v: &[f64]) -> Vec<f64> {
            v.to_vec()
        }
    }

    #[test]
    fn lanczos_identity_breakdown() {
        let e = lanczos_topk(&Identity(10), 1, 10, 4).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_invalid_k() {
        assert!(matches!(
            lanczos_topk(&Identity(3), 4, 10, 0),
            Err(LinalgError::InvalidK { .. })
        ));
        assert!(matches!(
            lanczos_topk(&Identity(3), 0, 10, 0),
            Err(LinalgError::InvalidK { .. })
        ));
    }

    #[test]
    fn lanczos_matches_jacobi_random_50() {
        let a = random_symmetric(99, 50);
        let full = jacobi_eigh(&a).unwrap();
        let top = lanczos_topk(&a, 5, 50, 1).unwrap();
        for i in 0..5 {
            assert!((top.values[i] - full.values[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn lanczos_is_deterministic() {
        let a = random_symmetric(3, 30);
        let e1 = lanczos_topk(&a, 3, 20, 9).unwrap();
        let e2 = lanczos_topk(&a, 3, 20, 9).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn projection_cases() {
        let b1 = vec![1.0, 0.0, 0.0];
        let (p, r) = project_onto_subspace(&b1, std::slice::from_ref(&b1)).unwrap();
        assert_eq!(p, b1);
        assert_eq!(r, vec![0.0; 3]);
        let v = vec![0.0, 2.0, 1.0];
        let (p, r) = project_onto_subspace(&v, &[b1]).unwrap();
        assert_eq!(p, vec![0.0; 3]);
        assert_eq!(r, v);
        assert!(matches!(
            project_onto_subspace(&[1.0, 2.0], &[vec![1.0]]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }
}
