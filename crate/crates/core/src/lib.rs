//! Break-even analysis of SGD.
//!
//! The crate has two halves. [`quadratic`] is an exact model of SGD on a
//! one-dimensional quadratic loss along the top Hessian direction: the
//! stability condition, break-even curvature and Monte-Carlo checks of
//! both. The rest instruments real (small) network training with the
//! spectral quantities that model talks about: the top Hessian eigenvalues
//! via Lanczos ([`linalg`], [`netmodel`]) and the gradient-covariance
//! spectrum via Gram matrices ([`spectra`]), collected over a run by
//! [`trainer`] and rendered by [`cli`].

pub mod cli;
pub mod linalg;
pub mod netmodel;
pub mod quadratic;
pub mod rng;
pub mod spectra;
pub mod stats;
pub mod trainer;
