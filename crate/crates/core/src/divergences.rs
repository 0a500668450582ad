//! Discrepancy statistics between two samples.
//!
//! * MMD², the squared RKHS distance of the mean embeddings.
//! * Hilbert–Schmidt distance² of the covariance embeddings, which equals the
//!   MMD² computed with the squared kernel `k²`.
//! * Projected KL divergence `D_KL(P_N# N_Q ‖ P_N# N_P)` between the Gaussian
//!   embeddings, with `P_N` the projection onto the leading `N` eigenfunctions
//!   of `S_P`. Writing `Λ = diag(λ₁..λ_N)`, `A = [⟨S_Q eᵢ, eⱼ⟩]` and
//!   `μ = [⟨m_P − m_Q, eᵢ⟩]`:
//!
//!   ```text
//!   Exact:    ½ μᵀΛ⁻¹μ − ½ log det₂(Λ^{-1/2} A Λ^{-1/2})
//!   Diagonal: ½ Σ μᵢ²/λᵢ + ½ Σ (Δᵢ − log(1 + Δᵢ)),  Δᵢ = Aᵢᵢ/λᵢ − 1
//!   ```
//!
//!   The two agree whenever `A` is diagonal. The mean term is dropped for
//!   centred embeddings.
//! * A ridge-regularized Mahalanobis distance between the mean embeddings,
//!   whitened by the pooled covariance `½(S_P + S_Q)`.
//!
//! The statistics are plug-in (V-statistic) estimates on uniform weights.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embeddings::{check_dims, CovEmbedding, MeanEmbedding, Sample};
use crate::kernels::{self, KernelSpec};
use crate::linalg;
use crate::spectral::{self, spectrum_from_gram, weighted_gram_of_rows, EigenFloor, SpectralBasis};
use crate::{Error, Result};

/// A Gram matrix of the pooled sample together with the rows belonging to
/// each side of a split.
pub(crate) struct Split<'a> {
    pub gram: &'a DMatrix<f64>,
    pub x: &'a [usize],
    pub y: &'a [usize],
}

impl Split<'_> {
    fn block_sum(&self, rows: &[usize], cols: &[usize], square: bool) -> f64 {
        let mut total = 0.0;
        for &i in rows {
            let mut row = 0.0;
            for &j in cols {
                let v = self.gram[(i, j)];
                row += if square { v * v } else { v };
            }
            total += row;
        }
        total
    }

    /// `(1/n²)ΣK_xx + (1/m²)ΣK_yy − (2/nm)ΣK_xy`, optionally on squared
    /// entries, clamped at zero.
    pub fn mmd_squared(&self, squared_entries: bool) -> f64 {
        let (n, m) = (self.x.len() as f64, self.y.len() as f64);
        let sxx = self.block_sum(self.x, self.x, squared_entries);
        let syy = self.block_sum(self.y, self.y, squared_entries);
        let sxy = self.block_sum(self.x, self.y, squared_entries);
        let v = sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m);
        v.max(0.0)
    }

    fn sub(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.gram[(rows[i], cols[j])])
    }

    /// Project both Gaussian embeddings onto the leading eigenfunctions of
    /// the `x` side's covariance embedding. With `mix`, the `y` side is
    /// replaced by the mixture `½(P̂ + Q̂)`.
    pub fn kl_projection(&self, max_components: usize, mix: bool) -> Result<KlProjection> {
        let (n, m) = (self.x.len(), self.y.len());
        let kxx = self.sub(self.x, self.x);
        let (eigenvalues, alpha) =
            spectrum_from_gram(&kxx, &vec![1.0 / n as f64; n], max_components, EigenFloor::default())?;
        let ex = &kxx * &alpha;
        let ey = self.sub(self.y, self.x) * &alpha;
        let px = column_means(&ex);
        let py = column_means(&ey);
        let ay = weighted_gram_of_rows(&ey, &vec![1.0 / m as f64; m]);
        let (q_mean, q_cov) = if mix {
            let ax = weighted_gram_of_rows(&ex, &vec![1.0 / n as f64; n]);
            ((&px + &py) * 0.5, (ax + ay) * 0.5)
        } else {
            (py, ay)
        };
        Ok(KlProjection {
            eigenvalues,
            mean_diff: px - q_mean,
            cov_q: q_cov,
        })
    }

    /// Mixture weights `½/n` on `x` rows and `½/m` on `y` rows, in the row
    /// order of the Gram matrix, which must hold exactly the two sides.
    fn pooled_weights(&self) -> Vec<f64> {
        let (n, m) = (self.x.len(), self.y.len());
        debug_assert_eq!(n + m, self.gram.nrows());
        let mut w = vec![0.5 / m as f64; n + m];
        for &i in self.x {
            w[i] = 0.5 / n as f64;
        }
        w
    }

    /// Eigenpairs of the pooled covariance `½(Ŝ_P + Ŝ_Q)`. With `n = m` the
    /// weights are uniform and the result does not depend on the split.
    pub fn pooled_spectrum(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let total = self.gram.nrows();
        spectrum_from_gram(self.gram, &self.pooled_weights(), total, EigenFloor::default())
    }

    /// Ridge-regularized Mahalanobis distance of the mean embeddings under
    /// the pooled covariance, optionally reusing [`Split::pooled_spectrum`].
    pub fn mahalanobis(&self, epsilon: f64, spectrum: Option<&(Vec<f64>, DMatrix<f64>)>) -> Result<f64> {
        let owned;
        let (gammas, alpha) = match spectrum {
            Some(s) => (&s.0, &s.1),
            None => {
                owned = self.pooled_spectrum()?;
                (&owned.0, &owned.1)
            }
        };
        let (n, m) = (self.x.len() as f64, self.y.len() as f64);
        let total = self.gram.nrows();
        // K δ with δ = 1/n on x rows and −1/m on y rows, each side summed
        // separately so that identical samples cancel exactly
        let side = |cols: &[usize], len: f64| {
            DVector::from_fn(total, |r, _| cols.iter().map(|&c| self.gram[(r, c)]).sum::<f64>() / len)
        };
        let kx = side(self.x, n);
        let ky = side(self.y, m);
        let sum_over = |v: &DVector<f64>, rows: &[usize], len: f64| rows.iter().map(|&r| v[r]).sum::<f64>() / len;
        let norm2 = ((sum_over(&kx, self.x, n) - sum_over(&ky, self.x, n))
            - (sum_over(&kx, self.y, m) - sum_over(&ky, self.y, m)))
            .max(0.0);
        let k_delta = kx - ky;
        let c = alpha.tr_mul(&k_delta);
        let mut captured = 0.0;
        let mut stat = 0.0;
        for (ci, gi) in c.iter().zip(gammas) {
            captured += ci * ci;
            stat += ci * ci / (gi + epsilon);
        }
        Ok(stat + (norm2 - captured).max(0.0) / epsilon)
    }
}

fn column_means(e: &DMatrix<f64>) -> DVector<f64> {
    let n = e.nrows() as f64;
    DVector::from_iterator(e.ncols(), e.column_iter().map(|c| c.sum() / n))
}

/// Projected moments needed by the KL statistics.
#[derive(Clone, Debug)]
pub(crate) struct KlProjection {
    pub eigenvalues: Vec<f64>,
    pub mean_diff: DVector<f64>,
    pub cov_q: DMatrix<f64>,
}

impl KlProjection {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn kl(&self, n: usize, variant: KlVariant) -> Result<f64> {
        kl_from_moments(&self.eigenvalues, &self.mean_diff, &self.cov_q, n, variant)
    }
}

fn pooled(kernel: &KernelSpec, x: &Sample, y: &Sample) -> Result<(DMatrix<f64>, Vec<usize>, Vec<usize>)> {
    kernel.validate()?;
    check_dims(x, y)?;
    let z = x.concat(y)?;
    let gram = kernels::self_gram(kernel, &z);
    let xi = (0..x.len()).collect();
    let yi = (x.len()..z.len()).collect();
    Ok((gram, xi, yi))
}

/// Plug-in MMD² between the empirical mean embeddings, clamped at zero.
pub fn mmd_squared(kernel: &KernelSpec, x: &Sample, y: &Sample) -> Result<f64> {
    let (gram, xi, yi) = pooled(kernel, x, y)?;
    Ok(Split { gram: &gram, x: &xi, y: &yi }.mmd_squared(false))
}

/// `‖Ŝ_P − Ŝ_Q‖²_HS`, expanded with squared kernel values.
pub fn hs_distance_squared(kernel: &KernelSpec, x: &Sample, y: &Sample) -> Result<f64> {
    let (gram, xi, yi) = pooled(kernel, x, y)?;
    Ok(Split { gram: &gram, x: &xi, y: &yi }.mmd_squared(true))
}

/// `log det₂(I + H) = Σ [log(1 + γⱼ) − γⱼ]` over the eigenvalues `γ` of `H`.
pub fn log_det2(gammas: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &g in gammas {
        if !(g > -1.0) {
            return Err(Error::Domain(format!(
                "Carleman–Fredholm determinant needs every eigenvalue > -1, got {g}"
            )));
        }
        total += g.ln_1p() - g;
    }
    Ok(total)
}

/// Carleman–Fredholm determinant `det₂(I + H) = Π (1 + γⱼ) e^{−γⱼ}`, in
/// `(0, 1]` for real `γ > −1`.
pub fn det2(gammas: &[f64]) -> Result<f64> {
    Ok(log_det2(gammas)?.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlKind {
    /// Sum over the diagonal of the projected covariance only.
    Diagonal,
    /// Full `N`-dimensional Gaussian relative entropy.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KlVariant {
    pub kind: KlKind,
    /// Drop the mean term (Gaussian embeddings with zero mean).
    pub centred: bool,
}

impl KlVariant {
    pub const EXACT: KlVariant = KlVariant {
        kind: KlKind::Exact,
        centred: false,
    };
    pub const DIAGONAL: KlVariant = KlVariant {
        kind: KlKind::Diagonal,
        centred: false,
    };

    pub fn centred(self) -> Self {
        KlVariant {
            centred: true,
            ..self
        }
    }
}

impl fmt::Display for KlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            KlKind::Diagonal => "kl-diag",
            KlKind::Exact => "kl-exact",
        };
        if self.centred {
            write!(f, "{kind} (centred)")
        } else {
            f.write_str(kind)
        }
    }
}

/// KL divergence from projected moments, truncated to the leading `n`
/// components. Returns `+∞` when the projected covariance of `Q` is singular
/// (relative to its largest whitened eigenvalue) or a diagonal ratio is not
/// positive.
pub(crate) fn kl_from_moments(
    eigenvalues: &[f64],
    mean_diff: &DVector<f64>,
    cov_q: &DMatrix<f64>,
    n: usize,
    variant: KlVariant,
) -> Result<f64> {
    if n > eigenvalues.len() {
        return Err(Error::input(format!(
            "truncation {n} exceeds the {} available components",
            eigenvalues.len()
        )));
    }
    let mean_term = if variant.centred {
        0.0
    } else {
        (0..n).map(|i| mean_diff[i] * mean_diff[i] / eigenvalues[i]).sum::<f64>()
    };
    let inv_sqrt: Vec<f64> = eigenvalues[..n].iter().map(|l| 1.0 / l.sqrt()).collect();
    let gammas: Vec<f64> = match variant.kind {
        KlKind::Diagonal => (0..n)
            .map(|i| cov_q[(i, i)] * inv_sqrt[i] * inv_sqrt[i] - 1.0)
            .collect(),
        KlKind::Exact => {
            if n == 0 {
                Vec::new()
            } else {
                let whitened = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * cov_q[(i, j)] * inv_sqrt[j]);
                let eig = linalg::sym_eig(&whitened)?;
                let top = eig.eigenvalues[0].max(1.0);
                if eig.eigenvalues[n - 1] <= 1e-13 * top {
                    return Ok(f64::INFINITY);
                }
                eig.eigenvalues.iter().map(|mu| mu - 1.0).collect()
            }
        }
    };
    match log_det2(&gammas) {
        Ok(ld) => Ok(0.5 * (mean_term - ld)),
        Err(Error::Domain(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `D_KL(P_N# N(m_Q, S_Q) ‖ P_N# N(m_P, S_P))` with `P_N` spanned by the
/// first `n` components of `basis_p` (the eigenbasis of `S_P`).
pub fn projected_kl(
    basis_p: &SpectralBasis,
    m_p: &MeanEmbedding,
    m_q: &MeanEmbedding,
    s_q: &CovEmbedding,
    n: usize,
    variant: KlVariant,
) -> Result<f64> {
    if n > basis_p.len() {
        return Err(Error::input(format!(
            "truncation {n} exceeds the {} available components",
            basis_p.len()
        )));
    }
    let basis = basis_p.truncated(n);
    let mean_diff = if variant.centred {
        DVector::zeros(n)
    } else {
        spectral::project_mean(&basis, m_p)? - spectral::project_mean(&basis, m_q)?
    };
    let cov_q = spectral::project_cov(&basis, s_q)?;
    kl_from_moments(&basis.eigenvalues, &mean_diff, &cov_q, n, variant)
}

/// Projected KL as a function of the truncation level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCurve {
    pub truncations: Vec<usize>,
    #[serde(with = "crate::serde_ext::float_vec")]
    pub values: Vec<f64>,
    pub kernel: KernelSpec,
    pub variant: KlVariant,
    pub mix: bool,
    pub n_x: usize,
    pub n_y: usize,
    /// Number of eigencomponents of `Ŝ_P` above the floor (capped at the
    /// largest requested truncation).
    pub available_rank: usize,
    /// Requested truncations above `available_rank` were dropped.
    pub rank_limited: bool,
}

/// Validate and sort-check a truncation list.
fn check_truncations(truncations: &[usize]) -> Result<()> {
    if truncations.is_empty() {
        return Err(Error::input("empty truncation list"));
    }
    if truncations[0] == 0 {
        return Err(Error::input("truncation levels must be at least 1"));
    }
    if truncations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("truncation levels must be strictly ascending"));
    }
    Ok(())
}

pub(crate) fn curve_from_projection(
    proj: &KlProjection,
    truncations: &[usize],
    variant: KlVariant,
) -> Result<(Vec<usize>, Vec<f64>, bool)> {
    let kept: Vec<usize> = truncations.iter().copied().filter(|&t| t <= proj.len()).collect();
    let limited = kept.len() < truncations.len();
    let values = kept.iter().map(|&t| proj.kl(t, variant)).collect::<Result<Vec<_>>>()?;
    Ok((kept, values, limited))
}

/// Projected KL of `Y` against the eigenbasis of `X` at each truncation.
/// Levels beyond the numerical rank of `X`'s covariance embedding are dropped
/// and flagged.
pub fn divergence_curve(
    kernel: &KernelSpec,
    x: &Sample,
    y: &Sample,
    truncations: &[usize],
    variant: KlVariant,
) -> Result<DivergenceCurve> {
    divergence_curve_with(kernel, x, y, truncations, variant, false)
}

/// [`divergence_curve`], optionally replacing `Q` by the mixture `½(P + Q)`.
pub fn divergence_curve_with(
    kernel: &KernelSpec,
    x: &Sample,
    y: &Sample,
    truncations: &[usize],
    variant: KlVariant,
    mix: bool,
) -> Result<DivergenceCurve> {
    check_truncations(truncations)?;
    let (gram, xi, yi) = pooled(kernel, x, y)?;
    let split = Split { gram: &gram, x: &xi, y: &yi };
    let max_n = *truncations.last().expect("nonempty");
    let proj = split.kl_projection(max_n, mix)?;
    let (kept, values, rank_limited) = curve_from_projection(&proj, truncations, variant)?;
    Ok(DivergenceCurve {
        truncations: kept,
        values,
        kernel: *kernel,
        variant,
        mix,
        n_x: x.len(),
        n_y: y.len(),
        available_rank: proj.len(),
        rank_limited,
    })
}

/// `Σᵢ cᵢ²/(γᵢ + ε) + r²/ε`, a ridge-regularized `‖S̄^{-1/2}(m̂_P − m̂_Q)‖²`
/// with `S̄ = ½(Ŝ_P + Ŝ_Q)` on the pooled sample. `(γᵢ, eᵢ)` are the retained
/// eigenpairs of `S̄`, `cᵢ = ⟨m̂_P − m̂_Q, eᵢ⟩` and `r²` the part of
/// `‖m̂_P − m̂_Q‖²` outside their span.
pub fn mahalanobis_regularized(kernel: &KernelSpec, x: &Sample, y: &Sample, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
    }
    let (gram, xi, yi) = pooled(kernel, x, y)?;
    Split { gram: &gram, x: &xi, y: &yi }.mahalanobis(epsilon, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{cov_embed, mean_embed};
    use crate::kernels::{explicit_feature_map, squared};
    use crate::spectral::cov_spectrum;
    use crate::synth::tests_support::uniform_sample;

    fn rbf() -> KernelSpec {
        KernelSpec::rbf(0.9).unwrap()
    }

    #[test]
    fn mmd_examples() {
        let x = uniform_sample(20, 2, 1);
        assert!(mmd_squared(&rbf(), &x, &x.clone()).unwrap() <= 1e-12);
        let a = Sample::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let b = Sample::from_rows(&[vec![1.0, 0.5]]).unwrap();
        let kab = kernels::eval(&rbf(), a.row(0), b.row(0)).unwrap();
        assert!((mmd_squared(&rbf(), &a, &b).unwrap() - (2.0 - 2.0 * kab)).abs() < 1e-15);
        let far = Sample::from_rows(&[vec![100.0, 0.0]]).unwrap();
        assert!((mmd_squared(&rbf(), &a, &far).unwrap() - 2.0).abs() < 1e-15);
        let y = uniform_sample(5, 3, 1);
        assert!(mmd_squared(&rbf(), &x, &y).is_err());
    }

    #[test]
    fn mmd_linear_oracle() {
        let k = KernelSpec::polynomial(1, 0.3, 2.0).unwrap();
        let x = uniform_sample(15, 2, 3);
        let y = uniform_sample(22, 2, 4);
        let mean_phi = |s: &Sample| {
            let mut v = DVector::zeros(3);
            for r in s.rows() {
                v += DVector::from_vec(explicit_feature_map(&k, r).unwrap());
            }
            v / s.len() as f64
        };
        let d = mean_phi(&x) - mean_phi(&y);
        assert!((mmd_squared(&k, &x, &y).unwrap() - d.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn hs_matches_squared_kernel_mmd() {
        for seed in 0..10 {
            let x = uniform_sample(10 + seed as usize, 2, seed);
            let y = uniform_sample(7, 2, seed + 50);
            for k in [rbf(), KernelSpec::laplace(0.7).unwrap(), KernelSpec::polynomial(2, 1.0, 0.5).unwrap()] {
                let hs = hs_distance_squared(&k, &x, &y).unwrap();
                let mmd = mmd_squared(&squared(&k), &x, &y).unwrap();
                assert!((hs - mmd).abs() <= 1e-12, "{k}: {hs} vs {mmd}");
            }
        }
        let x = uniform_sample(10, 2, 0);
        assert_eq!(hs_distance_squared(&rbf(), &x, &x.clone()).unwrap(), 0.0);
    }

    #[test]
    fn hs_linear_oracle() {
        let k = KernelSpec::polynomial(1, 1.0, 1.0).unwrap();
        let x = uniform_sample(12, 2, 8);
        let y = uniform_sample(9, 2, 9);
        let second = |s: &Sample| {
            let mut m = DMatrix::zeros(3, 3);
            for r in s.rows() {
                let p = DVector::from_vec(explicit_feature_map(&k, r).unwrap());
                m += &p * p.transpose();
            }
            m / s.len() as f64
        };
        let d = second(&x) - second(&y);
        assert!((hs_distance_squared(&k, &x, &y).unwrap() - d.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn det2_examples() {
        assert_eq!(det2(&[]).unwrap(), 1.0);
        assert_eq!(det2(&[0.0, 0.0]).unwrap(), 1.0);
        assert!((det2(&[1.0]).unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        let want = 2.0 * (-1.0f64).exp() * 0.5 * 0.5f64.exp();
        assert!((det2(&[1.0, -0.5]).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.606531).abs() < 1e-6);
        assert!(matches!(det2(&[-1.0]), Err(Error::Domain(_))));
        assert!(matches!(det2(&[0.5, -2.0]), Err(Error::Domain(_))));
    }

    /// Basis `e₁(t) = t` for the linear kernel in 1-d with support {1}, and
    /// `S_Q` supported on {σ}: `⟨S_Q e₁, e₁⟩ = σ²`.
    fn one_component(sigma2: f64, variant: KlVariant) -> f64 {
        let k = KernelSpec::linear();
        let xp = Sample::from_rows(&[vec![1.0]]).unwrap();
        let yq = Sample::from_rows(&[vec![sigma2.sqrt()]]).unwrap();
        let b = cov_spectrum(&cov_embed(&k, &xp).unwrap(), 1, EigenFloor::default()).unwrap();
        assert_eq!(b.eigenvalues, vec![1.0]);
        projected_kl(
            &b,
            &mean_embed(&k, &xp).unwrap(),
            &mean_embed(&k, &yq).unwrap(),
            &cov_embed(&k, &yq).unwrap(),
            1,
            variant,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        for s2 in [0.25, 0.5, 2.0, 4.0] {
            let want = 0.5 * (s2 - 1.0 - f64::ln(s2));
            for kind in [KlKind::Diagonal, KlKind::Exact] {
                let got = one_component(s2, KlVariant { kind, centred: true });
                assert!((got - want).abs() <= 1e-12, "{s2} {kind:?}: {got} vs {want}");
            }
        }
        assert!((one_component(2.0, KlVariant::EXACT.centred()) - 0.153426).abs() < 1e-6);
        // uncentred adds ½(1 − σ)²/λ
        let s2: f64 = 2.0;
        let want = 0.5 * (s2 - 1.0 - s2.ln()) + 0.5 * (1.0 - s2.sqrt()).powi(2);
        assert!((one_component(s2, KlVariant::EXACT) - want).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_give_zero_kl() {
        let x = uniform_sample(40, 2, 17);
        let s = cov_embed(&rbf(), &x).unwrap();
        let b = cov_spectrum(&s, 40, EigenFloor::default()).unwrap();
        let m = mean_embed(&rbf(), &x).unwrap();
        for n in [1, 5, b.len()] {
            for v in [KlVariant::EXACT, KlVariant::DIAGONAL, KlVariant::EXACT.centred()] {
                let kl = projected_kl(&b, &m, &m, &s, n, v).unwrap();
                assert!(kl.abs() <= 1e-8, "N={n} {v}: {kl}");
            }
        }
        assert!(projected_kl(&b, &m, &m, &s, b.len() + 1, KlVariant::EXACT).is_err());
    }

    #[test]
    fn singular_projection_is_infinite() {
        let x = uniform_sample(30, 2, 2);
        let y = Sample::from_rows(&[vec![0.1, 0.2]]).unwrap();
        let b = cov_spectrum(&cov_embed(&rbf(), &x).unwrap(), 5, EigenFloor::default()).unwrap();
        let kl = projected_kl(
            &b,
            &mean_embed(&rbf(), &x).unwrap(),
            &mean_embed(&rbf(), &y).unwrap(),
            &cov_embed(&rbf(), &y).unwrap(),
            5,
            KlVariant::EXACT,
        )
        .unwrap();
        assert_eq!(kl, f64::INFINITY);
    }

    /// Brute-force Gaussian KL in explicit feature coordinates.
    fn feature_space_kl(k: &KernelSpec, x: &Sample, y: &Sample, centred: bool) -> f64 {
        let dim = explicit_feature_map(k, x.row(0)).unwrap().len();
        let moments = |s: &Sample| {
            let mut mean = DVector::zeros(dim);
            let mut second = DMatrix::zeros(dim, dim);
            for r in s.rows() {
                let p = DVector::from_vec(explicit_feature_map(k, r).unwrap());
                mean += &p;
                second += &p * p.transpose();
            }
            (mean / s.len() as f64, second / s.len() as f64)
        };
        let (mp, sp) = moments(x);
        let (mq, sq) = moments(y);
        let sp_inv = sp.clone().try_inverse().unwrap();
        let d = &mp - &mq;
        let mean_term = if centred { 0.0 } else { d.dot(&(&sp_inv * &d)) };
        0.5 * ((&sp_inv * &sq).trace() - dim as f64 + mean_term - (sq.determinant() / sp.determinant()).ln())
    }

    #[test]
    fn exact_kl_linear_oracle() {
        let k = KernelSpec::polynomial(1, 0.5, 1.0).unwrap();
        for seed in 0..5 {
            let x = uniform_sample(25, 2, seed);
            let y = uniform_sample(18, 2, seed + 100);
            let b = cov_spectrum(&cov_embed(&k, &x).unwrap(), 25, EigenFloor::default()).unwrap();
            assert_eq!(b.len(), 3);
            for centred in [false, true] {
                let v = KlVariant { kind: KlKind::Exact, centred };
                let got = projected_kl(
                    &b,
                    &mean_embed(&k, &x).unwrap(),
                    &mean_embed(&k, &y).unwrap(),
                    &cov_embed(&k, &y).unwrap(),
                    3,
                    v,
                )
                .unwrap();
                let want = feature_space_kl(&k, &x, &y, centred);
                assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn diagonal_equals_exact_for_axis_aligned_data() {
        // linear kernel, c = 0, points on the axes with symmetric signs: every
        // second-moment matrix is diagonal in the standard basis
        let k = KernelSpec::linear();
        let x = Sample::from_rows(&[vec![2.0, 0.0], vec![-2.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let y = Sample::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 3.0], vec![0.0, -3.0], vec![0.0, 0.5]])
            .unwrap();
        let b = cov_spectrum(&cov_embed(&k, &x).unwrap(), 2, EigenFloor::default()).unwrap();
        let args = (mean_embed(&k, &x).unwrap(), mean_embed(&k, &y).unwrap(), cov_embed(&k, &y).unwrap());
        let a = spectral::project_cov(&b, &args.2).unwrap();
        assert!(a[(0, 1)].abs() < 1e-14);
        let d = projected_kl(&b, &args.0, &args.1, &args.2, 2, KlVariant::DIAGONAL).unwrap();
        let e = projected_kl(&b, &args.0, &args.1, &args.2, 2, KlVariant::EXACT).unwrap();
        assert!((d - e).abs() <= 1e-8, "{d} vs {e}");
    }

    #[test]
    fn curve_matches_pointwise_projected_kl() {
        let x = uniform_sample(60, 2, 6);
        let y = uniform_sample(50, 2, 7);
        let curve = divergence_curve(&rbf(), &x, &y, &[1, 3, 8], KlVariant::EXACT).unwrap();
        assert_eq!(curve.truncations, vec![1, 3, 8]);
        assert!(!curve.rank_limited);
        let b = cov_spectrum(&cov_embed(&rbf(), &x).unwrap(), 8, EigenFloor::default()).unwrap();
        let (mp, mq, sq) = (mean_embed(&rbf(), &x).unwrap(), mean_embed(&rbf(), &y).unwrap(), cov_embed(&rbf(), &y).unwrap());
        for (t, v) in curve.truncations.iter().zip(&curve.values) {
            let direct = projected_kl(&b, &mp, &mq, &sq, *t, KlVariant::EXACT).unwrap();
            assert!((v - direct).abs() <= 1e-9 * direct.max(1.0), "N={t}: {v} vs {direct}");
        }
    }

    #[test]
    fn curve_identical_samples_and_rank_shortfall() {
        let x = uniform_sample(30, 2, 1);
        let c = divergence_curve(&rbf(), &x, &x.clone(), &[1, 2, 5, 10, 20], KlVariant::DIAGONAL).unwrap();
        assert!(c.values.iter().all(|v| v.abs() <= 1e-8));
        let k = KernelSpec::linear();
        let c = divergence_curve(&k, &x, &x.clone(), &[1, 2, 3, 4], KlVariant::EXACT).unwrap();
        assert!(c.rank_limited);
        assert_eq!(c.truncations, vec![1, 2]);
        assert!(divergence_curve(&rbf(), &x, &x, &[3, 2], KlVariant::EXACT).is_err());
        assert!(divergence_curve(&rbf(), &x, &x, &[0, 2], KlVariant::EXACT).is_err());
        assert!(divergence_curve(&rbf(), &x, &x, &[], KlVariant::EXACT).is_err());
    }

    #[test]
    fn mixture_keeps_statistic_finite() {
        let x = uniform_sample(30, 2, 2);
        let y = Sample::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.2]]).unwrap();
        let plain = divergence_curve(&rbf(), &x, &y, &[5], KlVariant::EXACT).unwrap();
        assert_eq!(plain.values[0], f64::INFINITY);
        let mixed = divergence_curve_with(&rbf(), &x, &y, &[5], KlVariant::EXACT, true).unwrap();
        assert!(mixed.values[0].is_finite());
    }

    #[test]
    fn mahalanobis_examples() {
        let x = uniform_sample(25, 2, 3);
        assert_eq!(mahalanobis_regularized(&rbf(), &x, &x.clone(), 0.1).unwrap(), 0.0);
        assert!(mahalanobis_regularized(&rbf(), &x, &x, 0.0).is_err());
        assert!(mahalanobis_regularized(&rbf(), &x, &x, -1.0).is_err());

        let y = uniform_sample(20, 2, 4);
        let eps = 1e6;
        let stat = mahalanobis_regularized(&rbf(), &x, &y, eps).unwrap();
        let mmd = mmd_squared(&rbf(), &x, &y).unwrap();
        assert!((eps * stat - mmd).abs() <= 1e-4 * mmd);
    }

    #[test]
    fn mahalanobis_linear_oracle() {
        let k = KernelSpec::polynomial(1, 0.8, 1.0).unwrap();
        let x = uniform_sample(14, 2, 10);
        let y = uniform_sample(11, 2, 11);
        let eps = 0.05;
        let feats = |s: &Sample| -> Vec<DVector<f64>> {
            s.rows().map(|r| DVector::from_vec(explicit_feature_map(&k, r).unwrap())).collect()
        };
        let (fx, fy) = (feats(&x), feats(&y));
        let mut pooled = DMatrix::<f64>::zeros(3, 3);
        for p in &fx {
            pooled += p * p.transpose() * (0.5 / 14.0);
        }
        for p in &fy {
            pooled += p * p.transpose() * (0.5 / 11.0);
        }
        let mean = |v: &[DVector<f64>]| v.iter().fold(DVector::zeros(3), |a, b| a + b) / v.len() as f64;
        let delta = mean(&fx) - mean(&fy);
        let ridge = pooled + DMatrix::identity(3, 3) * eps;
        let want = delta.dot(&linalg::solve_spd(&ridge, &delta).unwrap());
        let got = mahalanobis_regularized(&k, &x, &y, eps).unwrap();
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn statistics_are_symmetric_and_nonnegative(n in 2usize..20, m in 2usize..20, seed in any::<u64>()) {
                let x = uniform_sample(n, 2, seed);
                let y = uniform_sample(m, 2, seed.wrapping_add(7));
                let a = mmd_squared(&rbf(), &x, &y).unwrap();
                let b = mmd_squared(&rbf(), &y, &x).unwrap();
                prop_assert!(a >= 0.0 && (a - b).abs() <= 1e-14);
                let a = hs_distance_squared(&rbf(), &x, &y).unwrap();
                let b = hs_distance_squared(&rbf(), &y, &x).unwrap();
                prop_assert!(a >= 0.0 && (a - b).abs() <= 1e-14);
            }

            #[test]
            fn det2_in_unit_interval(g in prop::collection::vec(-0.999f64..10.0, 0..12)) {
                let d = det2(&g).unwrap();
                prop_assert!(d > 0.0 || g.iter().any(|v| *v > 100.0 || *v < -0.99));
                prop_assert!(d <= 1.0);
            }

            #[test]
            fn curves_are_monotone(seed in any::<u64>(), shift in 0.0f64..1.0) {
                let x = uniform_sample(40, 2, seed);
                let y = crate::synth::generate(
                    &crate::synth::DistributionSpec::UniformCube { dim: 2, half_width: 1.0 }
                        .shifted(vec![shift, 0.0]),
                    35,
                    seed.wrapping_add(1),
                ).unwrap();
                let t: Vec<usize> = (1..=15).collect();
                for v in [KlVariant::EXACT, KlVariant::DIAGONAL, KlVariant::EXACT.centred()] {
                    let c = divergence_curve(&rbf(), &x, &y, &t, v).unwrap();
                    prop_assert!(c.values[0] >= -1e-9);
                    for w in c.values.windows(2) {
                        prop_assert!(w[1] >= w[0] - 1e-9, "{:?}", c.values);
                    }
                }
            }
        }
    }
}
