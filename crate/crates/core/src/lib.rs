//! Kernel Gaussian embeddings for nonparametric two-sample testing.
//!
//! A probability measure observed through a sample is mapped to its kernel
//! mean embedding `m = Σ wᵢ k(xᵢ, ·)` and its (uncentred) covariance embedding
//! `S = Σ wᵢ k(xᵢ, ·) ⊗ k(xᵢ, ·)` in the reproducing kernel Hilbert space of a
//! kernel `k`. The pair defines a Gaussian measure `N(m, S)` on that space.
//! Two such Gaussians are mutually singular whenever the underlying measures
//! differ, so the KL divergence between their projections onto the leading
//! `N` eigenfunctions of `S` grows without bound in `N` under the alternative
//! and stays at zero under the null.
//!
//! Everything is computed extrinsically from Gram matrices: embeddings keep
//! their support points and weights, and all Hilbert-space algebra reduces to
//! kernel evaluations.
//!
//! ```
//! use kgauss::{divergences, embeddings::Sample, kernels::KernelSpec};
//!
//! let x = Sample::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.1], vec![0.2, -0.3]]).unwrap();
//! let y = Sample::from_rows(&[vec![2.0, 2.0], vec![2.5, 2.1], vec![2.2, 1.7]]).unwrap();
//! let k = KernelSpec::rbf(1.0).unwrap();
//! let mmd2 = divergences::mmd_squared(&k, &x, &y).unwrap();
//! assert!(mmd2 > 0.5);
//! ```
//!
//! Data are assumed to lie on a compact domain; any finite numeric sample is
//! accepted and compactness is not checked.

pub mod divergences;
pub mod embeddings;
mod error;
pub mod kernels;
pub mod linalg;
pub mod serde_ext;
pub mod spectral;
pub mod synth;
pub mod testing;

pub use error::{Error, Result};
