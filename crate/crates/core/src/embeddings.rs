//! Empirical kernel mean and covariance embeddings.
//!
//! Embeddings are stored extrinsically as support points plus weights. The
//! mean embedding is `m = Σ wᵢ k(xᵢ, ·)`, the (uncentred) covariance
//! embedding is `S = Σ wᵢ k(xᵢ, ·) ⊗ k(xᵢ, ·)`, acting as
//! `S f = Σ wᵢ f(xᵢ) k(xᵢ, ·)`. Uniform weights give the plug-in
//! (V-statistic) estimators, which are biased upwards by `O(1/n)` for
//! squared-distance quantities such as MMD².

use std::ops::Deref;

use crate::kernels::{self, KernelSpec};
use crate::{Error, Result};

/// `n × d` observations, row-major. Never empty, all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    dim: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("points must have dimension at least 1"));
        }
        if data.is_empty() {
            return Err(Error::input("empty sample"));
        }
        if data.len() % dim != 0 {
            return Err(Error::input(format!(
                "{} values do not fill rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite value in row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Sample { data, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::input("empty sample"))?;
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::input(format!(
                "row {i} has {} values, expected {dim}",
                rows[i].len()
            )));
        }
        Sample::new(rows.concat(), dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Sample> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::input(format!("row index {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Sample::new(data, self.dim)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        check_dims(self, other)?;
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Sample {
            data,
            dim: self.dim,
        })
    }
}

pub(crate) fn check_dims(x: &Sample, y: &Sample) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

fn check_kernels(a: &KernelSpec, b: &KernelSpec) -> Result<()> {
    if a != b {
        return Err(Error::input(format!("kernel mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// A finite combination `f = Σ cᵢ k(zᵢ, ·)` of feature vectors. Coefficients
/// are unrestricted.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelExpansion {
    kernel: KernelSpec,
    support: Sample,
    coefficients: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(kernel: KernelSpec, support: Sample, coefficients: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        if coefficients.len() != support.len() {
            return Err(Error::input(format!(
                "{} coefficients for {} support points",
                coefficients.len(),
                support.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("non-finite coefficient"));
        }
        Ok(KernelExpansion {
            kernel,
            support,
            coefficients,
        })
    }

    /// The zero element, carried on a single support point.
    pub fn zero(kernel: KernelSpec, support: Sample) -> Result<Self> {
        let n = support.len();
        KernelExpansion::new(kernel, support, vec![0.0; n])
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn support(&self) -> &Sample {
        &self.support
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `f(x) = ⟨f, k(x, ·)⟩ = Σ cᵢ k(zᵢ, x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.support.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: {} vs {}",
                x.len(),
                self.support.dim()
            )));
        }
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        self.support
            .rows()
            .zip(&self.coefficients)
            .map(|(z, c)| c * self.kernel.eval_unchecked(z, x))
            .sum()
    }

    /// `⟨f, g⟩_H = Σᵢ Σⱼ cᵢ dⱼ k(zᵢ, uⱼ)`.
    pub fn inner(&self, other: &KernelExpansion) -> Result<f64> {
        check_kernels(&self.kernel, &other.kernel)?;
        check_dims(&self.support, &other.support)?;
        let g = kernels::cross_gram(&self.kernel, &self.support, &other.support);
        let mut total = 0.0;
        for (i, ci) in self.coefficients.iter().enumerate() {
            let row: f64 = other
                .coefficients
                .iter()
                .enumerate()
                .map(|(j, dj)| dj * g[(i, j)])
                .sum();
            total += ci * row;
        }
        Ok(total)
    }

    /// `f - g`, supported on the union of both supports.
    pub fn difference(&self, other: &KernelExpansion) -> Result<KernelExpansion> {
        check_kernels(&self.kernel, &other.kernel)?;
        let support = self.support.concat(&other.support)?;
        let coefficients = self
            .coefficients
            .iter()
            .copied()
            .chain(other.coefficients.iter().map(|c| -c))
            .collect();
        Ok(KernelExpansion {
            kernel: self.kernel,
            support,
            coefficients,
        })
    }
}

fn validate_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::input(format!("{} weights for {n} points", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::input("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::input(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Kernel mean embedding `m = Σ wᵢ k(xᵢ, ·)` with weights on the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanEmbedding(KernelExpansion);

impl MeanEmbedding {
    pub fn weighted(kernel: KernelSpec, support: Sample, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, support.len())?;
        Ok(MeanEmbedding(KernelExpansion::new(kernel, support, weights)?))
    }

    pub fn weights(&self) -> &[f64] {
        self.0.coefficients()
    }

    pub fn as_expansion(&self) -> &KernelExpansion {
        &self.0
    }

    /// Mean embedding of the mixture `½(self + other)`.
    pub fn mixture(&self, other: &MeanEmbedding) -> Result<MeanEmbedding> {
        check_kernels(self.kernel(), other.kernel())?;
        let support = self.support().concat(other.support())?;
        let weights = self
            .weights()
            .iter()
            .chain(other.weights())
            .map(|w| 0.5 * w)
            .collect();
        MeanEmbedding::weighted(*self.kernel(), support, weights)
    }
}

impl Deref for MeanEmbedding {
    type Target = KernelExpansion;

    fn deref(&self) -> &KernelExpansion {
        &self.0
    }
}

/// Uncentred covariance embedding `S = Σ wᵢ k(xᵢ, ·) ⊗ k(xᵢ, ·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovEmbedding {
    kernel: KernelSpec,
    support: Sample,
    weights: Vec<f64>,
}

impl CovEmbedding {
    pub fn weighted(kernel: KernelSpec, support: Sample, weights: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        validate_weights(&weights, support.len())?;
        Ok(CovEmbedding {
            kernel,
            support,
            weights,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn support(&self) -> &Sample {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Covariance embedding of the mixture `½(self + other)`.
    pub fn mixture(&self, other: &CovEmbedding) -> Result<CovEmbedding> {
        check_kernels(&self.kernel, &other.kernel)?;
        let support = self.support.concat(&other.support)?;
        let weights = self
            .weights
            .iter()
            .chain(&other.weights)
            .map(|w| 0.5 * w)
            .collect();
        CovEmbedding::weighted(self.kernel, support, weights)
    }

    /// `S f` as a kernel expansion on the support of `S`.
    pub fn apply(&self, f: &KernelExpansion) -> Result<KernelExpansion> {
        check_kernels(&self.kernel, f.kernel())?;
        check_dims(&self.support, f.support())?;
        let coefficients = self
            .support
            .rows()
            .zip(&self.weights)
            .map(|(x, w)| w * f.evaluate_unchecked(x))
            .collect();
        KernelExpansion::new(self.kernel, self.support.clone(), coefficients)
    }
}

/// The Gaussian measure `N(m, S)` on the RKHS, or `N(0, S)` when centred.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEmbedding {
    /// `None` for the centred embedding.
    pub mean: Option<MeanEmbedding>,
    pub cov: CovEmbedding,
}

impl GaussianEmbedding {
    pub fn new(mean: Option<MeanEmbedding>, cov: CovEmbedding) -> Result<Self> {
        if let Some(m) = &mean {
            check_kernels(m.kernel(), cov.kernel())?;
        }
        Ok(GaussianEmbedding { mean, cov })
    }

    /// `N(m_P, S_P)`, or `N(0, S_P)` when `centred`.
    pub fn from_sample(kernel: &KernelSpec, x: &Sample, centred: bool) -> Result<Self> {
        let cov = cov_embed(kernel, x)?;
        let mean = if centred { None } else { Some(mean_embed(kernel, x)?) };
        Ok(GaussianEmbedding { mean, cov })
    }

    pub fn is_centred(&self) -> bool {
        self.mean.is_none()
    }
}

/// Empirical mean embedding with uniform weights.
pub fn mean_embed(kernel: &KernelSpec, x: &Sample) -> Result<MeanEmbedding> {
    MeanEmbedding::weighted(*kernel, x.clone(), uniform_weights(x.len()))
}

/// `m(x) = Σ wᵢ k(xᵢ, x)`.
pub fn evaluate_mean(m: &MeanEmbedding, x: &[f64]) -> Result<f64> {
    m.evaluate(x)
}

/// `⟨m₁, m₂⟩_H`.
pub fn mean_inner(m1: &MeanEmbedding, m2: &MeanEmbedding) -> Result<f64> {
    m1.inner(m2)
}

/// Empirical covariance embedding with uniform weights.
pub fn cov_embed(kernel: &KernelSpec, x: &Sample) -> Result<CovEmbedding> {
    CovEmbedding::weighted(*kernel, x.clone(), uniform_weights(x.len()))
}

/// `⟨f, S f⟩_H = Σ wᵢ f(xᵢ)²`.
pub fn cov_quadratic_form(s: &CovEmbedding, f: &KernelExpansion) -> Result<f64> {
    check_kernels(s.kernel(), f.kernel())?;
    check_dims(s.support(), f.support())?;
    Ok(s.support
        .rows()
        .zip(&s.weights)
        .map(|(x, w)| {
            let fx = f.evaluate_unchecked(x);
            w * fx * fx
        })
        .sum())
}

/// `trace(S) = Σ wᵢ k(xᵢ, xᵢ)`.
pub fn trace(s: &CovEmbedding) -> f64 {
    s.support
        .rows()
        .zip(&s.weights)
        .map(|(x, w)| w * s.kernel.eval_unchecked(x, x))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{eval, explicit_feature_map};
    use crate::synth::tests_support::uniform_sample;

    fn rbf() -> KernelSpec {
        KernelSpec::rbf(0.8).unwrap()
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new(vec![], 2).is_err());
        assert!(Sample::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Sample::new(vec![1.0, f64::NAN], 2).is_err());
        assert!(Sample::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let s = Sample::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert_eq!(s.select(&[1, 0]).unwrap().row(0), &[3.0, 4.0]);
        assert!(s.select(&[2]).is_err());
    }

    #[test]
    fn single_point_mean() {
        let x0 = Sample::from_rows(&[vec![0.2, 0.4]]).unwrap();
        let m = mean_embed(&rbf(), &x0).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(evaluate_mean(&m, &[0.2, 0.4]).unwrap(), 1.0);
        assert_eq!(mean_inner(&m, &m).unwrap(), 1.0);
        assert!(evaluate_mean(&m, &[0.2]).is_err());
    }

    #[test]
    fn mean_evaluation_is_average_of_kernel_values() {
        let x = uniform_sample(13, 2, 4);
        let m = mean_embed(&rbf(), &x).unwrap();
        let p = [0.1, -0.3];
        let expect: f64 = x.rows().map(|r| eval(&rbf(), r, &p).unwrap()).sum::<f64>() / 13.0;
        assert!((evaluate_mean(&m, &p).unwrap() - expect).abs() < 1e-15);

        let two = Sample::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let m2 = MeanEmbedding::weighted(rbf(), two, vec![0.5, 0.5]).unwrap();
        let expect = 0.5 * (eval(&rbf(), &[0.0, 0.0], &p).unwrap() + eval(&rbf(), &[1.0, 0.0], &p).unwrap());
        assert!((evaluate_mean(&m2, &p).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        let x = uniform_sample(2, 1, 1);
        assert!(MeanEmbedding::weighted(rbf(), x.clone(), vec![0.7, 0.7]).is_err());
        assert!(MeanEmbedding::weighted(rbf(), x.clone(), vec![1.5, -0.5]).is_err());
        assert!(CovEmbedding::weighted(rbf(), x.clone(), vec![1.0]).is_err());
        assert!(CovEmbedding::weighted(rbf(), x, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn kernel_mismatch_is_input_error() {
        let x = uniform_sample(3, 2, 1);
        let a = mean_embed(&rbf(), &x).unwrap();
        let b = mean_embed(&KernelSpec::rbf(2.0).unwrap(), &x).unwrap();
        assert!(matches!(mean_inner(&a, &b), Err(Error::Input(_))));
        let s = cov_embed(&KernelSpec::rbf(2.0).unwrap(), &x).unwrap();
        assert!(matches!(cov_quadratic_form(&s, &a), Err(Error::Input(_))));
    }

    #[test]
    fn covariance_quadratic_forms() {
        let x = uniform_sample(9, 2, 5);
        let s = cov_embed(&rbf(), &x).unwrap();
        let x0 = Sample::from_rows(&[vec![0.3, 0.1]]).unwrap();
        let f = KernelExpansion::new(rbf(), x0.clone(), vec![1.0]).unwrap();
        let expect: f64 =
            x.rows().map(|r| eval(&rbf(), &[0.3, 0.1], r).unwrap().powi(2)).sum::<f64>() / 9.0;
        assert!((cov_quadratic_form(&s, &f).unwrap() - expect).abs() < 1e-15);

        let zero = KernelExpansion::zero(rbf(), x0.clone()).unwrap();
        assert_eq!(cov_quadratic_form(&s, &zero).unwrap(), 0.0);

        // single support point on both sides, weight w
        let z0 = Sample::from_rows(&[vec![-0.5, 0.2]]).unwrap();
        let s1 = cov_embed(&rbf(), &z0).unwrap();
        let q = cov_quadratic_form(&s1, &f).unwrap();
        assert!((q - eval(&rbf(), &[0.3, 0.1], &[-0.5, 0.2]).unwrap().powi(2)).abs() < 1e-15);

        // ⟨f, S f⟩ through apply agrees with the direct form
        let sf = s.apply(&f).unwrap();
        assert!((f.inner(&sf).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn trace_examples() {
        let x = uniform_sample(17, 3, 2);
        assert_eq!(trace(&cov_embed(&rbf(), &x).unwrap()), 1.0);
        let x = Sample::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(trace(&cov_embed(&KernelSpec::linear(), &x).unwrap()), 1.0);
    }

    #[test]
    fn mmd_expansion_identical_samples_is_zero() {
        let x = uniform_sample(11, 2, 9);
        let mx = mean_embed(&rbf(), &x).unwrap();
        let my = mean_embed(&rbf(), &x.clone()).unwrap();
        let d2 = mean_inner(&mx, &mx).unwrap() + mean_inner(&my, &my).unwrap()
            - 2.0 * mean_inner(&mx, &my).unwrap();
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn linear_kernel_oracle() {
        let k = KernelSpec::polynomial(1, 0.5, 1.3).unwrap();
        for seed in 0..5 {
            let x = uniform_sample(7 + seed as usize, 2, seed);
            let y = uniform_sample(5, 2, 100 + seed);
            let phi = |s: &Sample| -> Vec<Vec<f64>> {
                s.rows().map(|r| explicit_feature_map(&k, r).unwrap()).collect()
            };
            let mean = |v: &[Vec<f64>]| -> Vec<f64> {
                (0..3).map(|c| v.iter().map(|r| r[c]).sum::<f64>() / v.len() as f64).collect()
            };
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            let (fx, fy) = (phi(&x), phi(&y));
            let (bx, by) = (mean(&fx), mean(&fy));
            let mx = mean_embed(&k, &x).unwrap();
            let my = mean_embed(&k, &y).unwrap();
            assert!((mean_inner(&mx, &my).unwrap() - dot(&bx, &by)).abs() < 1e-10);
            let p = [0.4, -0.9];
            let fp = explicit_feature_map(&k, &p).unwrap();
            assert!((evaluate_mean(&mx, &p).unwrap() - dot(&bx, &fp)).abs() < 1e-10);

            // ⟨f, S_x f⟩ with f = m_y equals by' M_x by, M_x = mean φφᵀ
            let s = cov_embed(&k, &x).unwrap();
            let mut q = 0.0;
            for r in &fx {
                q += dot(r, &by).powi(2);
            }
            q /= fx.len() as f64;
            assert!((cov_quadratic_form(&s, &my).unwrap() - q).abs() < 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn covariance_is_psd(
                n in 1usize..25,
                seed in any::<u64>(),
                coeffs in prop::collection::vec(-3.0f64..3.0, 6),
            ) {
                let x = uniform_sample(n, 2, seed);
                let z = uniform_sample(6, 2, seed ^ 0xABCD);
                let s = cov_embed(&rbf(), &x).unwrap();
                let f = KernelExpansion::new(rbf(), z, coeffs).unwrap();
                prop_assert!(cov_quadratic_form(&s, &f).unwrap() >= -1e-10);
            }

            #[test]
            fn mmd_expansion_nonnegative(n in 1usize..20, m in 1usize..20, seed in any::<u64>()) {
                let x = uniform_sample(n, 2, seed);
                let y = uniform_sample(m, 2, seed.wrapping_add(1));
                let mx = mean_embed(&rbf(), &x).unwrap();
                let my = mean_embed(&rbf(), &y).unwrap();
                let d2 = mean_inner(&mx, &mx).unwrap() + mean_inner(&my, &my).unwrap()
                    - 2.0 * mean_inner(&mx, &my).unwrap();
                prop_assert!(d2 >= -1e-12);
            }
        }
    }
}
