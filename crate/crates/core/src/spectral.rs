//! Eigendecomposition of embedded covariance operators and projections onto
//! the leading eigenfunctions.
//!
//! For `S = Σ wᵢ k(xᵢ, ·) ⊗ k(xᵢ, ·)` with Gram matrix `K` and `W = diag(w)`,
//! the nonzero eigenvalues of `S` are those of `W^{1/2} K W^{1/2}`. For a unit
//! eigenvector `u` with eigenvalue `λ`, the eigenfunction is
//! `e = Σⱼ αⱼ k(xⱼ, ·)` with `α = W^{1/2} u / √λ`, which is unit-norm in the
//! RKHS. Uniform weights give `α = u / √(nλ)`.
//!
//! The basis is the empirical eigenbasis of the reference sample's covariance
//! embedding, standing in for the population eigenbasis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embeddings::{check_dims, CovEmbedding, GaussianEmbedding, KernelExpansion, Sample};
use crate::kernels::{self, KernelSpec};
use crate::linalg;
use crate::{Error, Result};

/// Lower cutoff on retained eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenFloor {
    /// Keep `λ ≥ value`.
    Absolute(f64),
    /// Keep `λ ≥ value · λ₁`.
    Relative(f64),
}

impl Default for EigenFloor {
    fn default() -> Self {
        EigenFloor::Relative(1e-10)
    }
}

impl EigenFloor {
    fn threshold(&self, top: f64) -> Result<f64> {
        let (v, t) = match *self {
            EigenFloor::Absolute(v) => (v, v),
            EigenFloor::Relative(v) => (v, v * top),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::input(format!("eigenvalue floor must be positive, got {v}")));
        }
        Ok(t)
    }
}

/// Leading eigenpairs of an embedded covariance operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub kernel: KernelSpec,
    pub support: Sample,
    /// `λ₁ ≥ … ≥ λ_N > 0`.
    pub eigenvalues: Vec<f64>,
    /// `n × N`; column `i` holds the expansion coefficients of `eᵢ`.
    pub coefficients: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The leading `n` components.
    pub fn truncated(&self, n: usize) -> SpectralBasis {
        let n = n.min(self.len());
        SpectralBasis {
            kernel: self.kernel,
            support: self.support.clone(),
            eigenvalues: self.eigenvalues[..n].to_vec(),
            coefficients: self.coefficients.columns(0, n).into_owned(),
        }
    }

    /// `eᵢ` as a kernel expansion.
    pub fn eigenfunction(&self, i: usize) -> Result<KernelExpansion> {
        if i >= self.len() {
            return Err(Error::input(format!("component {i} out of range")));
        }
        KernelExpansion::new(
            self.kernel,
            self.support.clone(),
            self.coefficients.column(i).iter().copied().collect(),
        )
    }
}

/// Pushforward of a Gaussian embedding under the projection onto the span of
/// a spectral basis, in that basis' coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Eigenvalues and coefficient columns of `Σ wᵢ k(xᵢ,·)⊗k(xᵢ,·)` from its
/// Gram matrix. Returns at most `max_components` pairs above `floor`.
pub(crate) fn spectrum_from_gram(
    gram: &DMatrix<f64>,
    weights: &[f64],
    max_components: usize,
    floor: EigenFloor,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = gram.nrows();
    if max_components == 0 {
        return Err(Error::input("max_components must be at least 1"));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| sqrt_w[i] * gram[(i, j)] * sqrt_w[j]);
    let mut eig = linalg::sym_eig_top(&scaled, max_components)?;
    eig.clamp_psd();
    let top = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::DegenerateSpectrum(
            "covariance embedding has no positive eigenvalue".into(),
        ));
    }
    let thresh = floor.threshold(top)?;
    let keep = eig.eigenvalues.iter().take_while(|&&l| l >= thresh && l > 0.0).count();
    if keep == 0 {
        return Err(Error::DegenerateSpectrum(format!(
            "no eigenvalue above the floor {thresh:e}"
        )));
    }
    let mut coeffs = DMatrix::zeros(n, keep);
    for c in 0..keep {
        let inv = 1.0 / eig.eigenvalues[c].sqrt();
        let mut col = coeffs.column_mut(c);
        for r in 0..n {
            col[r] = sqrt_w[r] * eig.eigenvectors[(r, c)] * inv;
        }
        // sign: largest-magnitude coefficient positive, first index on ties
        let mut best = 0;
        for r in 1..n {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    eig.eigenvalues.truncate(keep);
    Ok((eig.eigenvalues, coeffs))
}

/// Leading eigenpairs of an empirical covariance embedding.
pub fn cov_spectrum(
    s: &CovEmbedding,
    max_components: usize,
    floor: EigenFloor,
) -> Result<SpectralBasis> {
    let gram = kernels::self_gram(s.kernel(), s.support());
    let (eigenvalues, coefficients) = spectrum_from_gram(&gram, s.weights(), max_components, floor)?;
    Ok(SpectralBasis {
        kernel: *s.kernel(),
        support: s.support().clone(),
        eigenvalues,
        coefficients,
    })
}

/// `E[l, i] = eᵢ(y_l)`.
pub fn eval_basis(basis: &SpectralBasis, y: &Sample) -> Result<DMatrix<f64>> {
    check_dims(&basis.support, y)?;
    let cross = kernels::cross_gram(&basis.kernel, y, &basis.support);
    Ok(cross * &basis.coefficients)
}

fn check_kernel(basis: &SpectralBasis, k: &KernelSpec) -> Result<()> {
    if basis.kernel != *k {
        return Err(Error::input(format!(
            "kernel mismatch: basis uses {}, element uses {k}",
            basis.kernel
        )));
    }
    Ok(())
}

/// `⟨f, eᵢ⟩_H = Σ_l c_l eᵢ(z_l)` for `f = Σ_l c_l k(z_l, ·)`.
pub fn project_mean(basis: &SpectralBasis, f: &KernelExpansion) -> Result<DVector<f64>> {
    check_kernel(basis, f.kernel())?;
    let e = eval_basis(basis, f.support())?;
    let c = DVector::from_column_slice(f.coefficients());
    Ok(e.tr_mul(&c))
}

/// `A[i, j] = ⟨S eᵢ, eⱼ⟩_H = Σ_l w_l eᵢ(y_l) eⱼ(y_l)`, exactly symmetric.
pub fn project_cov(basis: &SpectralBasis, s: &CovEmbedding) -> Result<DMatrix<f64>> {
    check_kernel(basis, s.kernel())?;
    let e = eval_basis(basis, s.support())?;
    Ok(weighted_gram_of_rows(&e, s.weights()))
}

/// `Eᵀ W E` computed on the upper triangle and mirrored.
pub(crate) fn weighted_gram_of_rows(e: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let k = e.ncols();
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v: f64 = (0..e.nrows()).map(|l| weights[l] * e[(l, i)] * e[(l, j)]).sum();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// `P_N# N(m, S)` in the coordinates of `basis`; a centred embedding projects
/// to a zero mean.
pub fn project_gaussian(basis: &SpectralBasis, g: &GaussianEmbedding) -> Result<ProjectedGaussian> {
    let mean = match &g.mean {
        Some(m) => project_mean(basis, m)?,
        None => DVector::zeros(basis.len()),
    };
    Ok(ProjectedGaussian {
        mean,
        covariance: project_cov(basis, &g.cov)?,
    })
}
