//! Permutation-calibrated two-sample tests and the median bandwidth
//! heuristic.
//!
//! The pooled Gram matrix is computed once; each permutation relabels its
//! rows. KL statistics recompute the spectral basis from the permuted `X`
//! side every time, so the permutation distribution stays exchangeable.
//! Permutation `b` draws from the ChaCha8 stream `b + 1` of the run seed,
//! which makes results independent of the thread schedule.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::{curve_from_projection, DivergenceCurve, KlKind, KlVariant, Split};
use crate::embeddings::{check_dims, Sample};
use crate::kernels::{self, KernelChoice, KernelSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Mmd,
    Hs,
    KlDiag,
    KlExact,
    Mahalanobis,
}

impl Statistic {
    pub fn is_kl(&self) -> bool {
        matches!(self, Statistic::KlDiag | Statistic::KlExact)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Mmd => "mmd",
            Statistic::Hs => "hs",
            Statistic::KlDiag => "kl-diag",
            Statistic::KlExact => "kl-exact",
            Statistic::Mahalanobis => "mahalanobis",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mmd" => Statistic::Mmd,
            "hs" => Statistic::Hs,
            "kl-diag" => Statistic::KlDiag,
            "kl-exact" => Statistic::KlExact,
            "mahalanobis" => Statistic::Mahalanobis,
            _ => return Err(Error::Parse(format!("unknown statistic `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub statistic: Statistic,
    pub kernel: KernelChoice,
    /// Truncation level for the KL statistics.
    pub truncation: usize,
    /// Ridge for the Mahalanobis statistic.
    pub epsilon: f64,
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    /// KL statistics: centred Gaussian embeddings.
    pub centred: bool,
    /// KL statistics: replace `Q` by `½(P + Q)`.
    pub mix: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            statistic: Statistic::KlExact,
            kernel: KernelChoice::RbfMedian,
            truncation: 20,
            epsilon: 1e-3,
            permutations: 199,
            alpha: 0.05,
            seed: 0,
            centred: false,
            mix: false,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::input("at least one permutation is required"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.statistic.is_kl() && self.truncation == 0 {
            return Err(Error::input("truncation must be at least 1"));
        }
        if self.statistic == Statistic::Mahalanobis && !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::input(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !self.statistic.is_kl() && (self.centred || self.mix) {
            return Err(Error::input(format!(
                "--centred/--mix apply only to KL statistics, not {}",
                self.statistic
            )));
        }
        if let KernelChoice::Fixed(k) = &self.kernel {
            k.validate()?;
        }
        Ok(())
    }

    fn kl_variant(&self) -> KlVariant {
        let kind = if self.statistic == Statistic::KlDiag {
            KlKind::Diagonal
        } else {
            KlKind::Exact
        };
        KlVariant {
            kind,
            centred: self.centred,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: Statistic,
    /// The kernel actually used (bandwidth resolved when chosen by the median
    /// heuristic).
    pub kernel: KernelSpec,
    #[serde(with = "crate::serde_ext::float")]
    pub observed: f64,
    #[serde(with = "crate::serde_ext::float_vec")]
    pub permutation_values: Vec<f64>,
    /// `(1 + #{b : T_b ≥ T_obs}) / (B + 1)`.
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// KL statistics: truncation actually used (the requested level capped by
    /// the numerical rank of the observed `X` side); 0 otherwise.
    pub effective_truncation: usize,
    /// KL statistics: the observed divergence curve for `N = 1..=effective`.
    pub diagnostics: Option<DivergenceCurve>,
}

/// Median of the pairwise Euclidean distances of the pooled sample. Pools of
/// more than 2000 points are subsampled to 2000 (fixed seed).
pub fn median_bandwidth(x: &Sample, y: &Sample) -> Result<f64> {
    check_dims(x, y)?;
    median_distance(&x.concat(y)?)
}

/// Median of the pairwise Euclidean distances of a single sample, with the
/// same subsampling rule as [`median_bandwidth`].
pub fn median_distance(pooled: &Sample) -> Result<f64> {
    if pooled.len() < 2 {
        return Err(Error::input("median heuristic needs at least two points"));
    }
    const CAP: usize = 2000;
    let pooled = if pooled.len() > CAP {
        let mut idx: Vec<usize> = (0..pooled.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_6469_616e);
        partial_shuffle(&mut idx, CAP, &mut rng);
        idx.truncate(CAP);
        idx.sort_unstable();
        pooled.select(&idx)?
    } else {
        pooled.clone()
    };
    let n = pooled.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let a = pooled.row(i);
        for j in (i + 1)..n {
            let b = pooled.row(j);
            d.push(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
        }
    }
    let med = median_in_place(&mut d);
    if !(med > 0.0) {
        if d.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateData("all pooled points are identical".into()));
        }
        return Err(Error::DegenerateData(
            "more than half of the pairwise distances are zero".into(),
        ));
    }
    Ok(med)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Uniform integer in `0..bound` by the multiply-high method.
fn below(rng: &mut impl RngCore, bound: usize) -> usize {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Fisher–Yates, front to back, for the first `k` slots.
fn partial_shuffle(idx: &mut [usize], k: usize, rng: &mut impl RngCore) {
    let n = idx.len();
    for i in 0..k.min(n.saturating_sub(1)) {
        let j = i + below(rng, n - i);
        idx.swap(i, j);
    }
}

/// Label permutation `b` of the pooled indices `0..total`.
pub(crate) fn permutation(seed: u64, b: usize, total: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64 + 1);
    let mut idx: Vec<usize> = (0..total).collect();
    partial_shuffle(&mut idx, total, &mut rng);
    idx
}

/// Resolve the kernel for a run.
pub fn resolve_kernel(choice: &KernelChoice, x: &Sample, y: &Sample) -> Result<KernelSpec> {
    match choice {
        KernelChoice::Fixed(k) => Ok(*k),
        KernelChoice::RbfMedian => KernelSpec::rbf(median_bandwidth(x, y)?),
    }
}

struct Evaluator<'a> {
    cfg: &'a TestConfig,
    gram: DMatrix<f64>,
    n: usize,
    /// Pooled spectrum shared by all splits (Mahalanobis with `n = m`).
    pooled: Option<(Vec<f64>, DMatrix<f64>)>,
}

impl Evaluator<'_> {
    fn evaluate(&self, order: &[usize], truncation: usize) -> Result<f64> {
        let split = Split {
            gram: &self.gram,
            x: &order[..self.n],
            y: &order[self.n..],
        };
        match self.cfg.statistic {
            Statistic::Mmd => Ok(split.mmd_squared(false)),
            Statistic::Hs => Ok(split.mmd_squared(true)),
            Statistic::Mahalanobis => split.mahalanobis(self.cfg.epsilon, self.pooled.as_ref()),
            Statistic::KlDiag | Statistic::KlExact => {
                let proj = split.kl_projection(truncation, self.cfg.mix)?;
                proj.kl(truncation.min(proj.len()), self.cfg.kl_variant())
            }
        }
    }
}

/// Permutation test of `H₀: P = Q` with the configured statistic.
pub fn permutation_test(cfg: &TestConfig, x: &Sample, y: &Sample) -> Result<TestResult> {
    cfg.validate()?;
    check_dims(x, y)?;
    let (n, m) = (x.len(), y.len());
    if n < 2 || m < 2 {
        return Err(Error::input(format!(
            "each sample needs at least two points, got n={n}, m={m}"
        )));
    }
    let kernel = resolve_kernel(&cfg.kernel, x, y)?;
    let pooled = x.concat(y)?;
    let mut eval = Evaluator {
        cfg,
        gram: kernels::self_gram(&kernel, &pooled),
        n,
        pooled: None,
    };
    let identity: Vec<usize> = (0..n + m).collect();
    if cfg.statistic == Statistic::Mahalanobis && n == m {
        let split = Split {
            gram: &eval.gram,
            x: &identity[..n],
            y: &identity[n..],
        };
        eval.pooled = Some(split.pooled_spectrum()?);
    }

    let (observed, effective, diagnostics) = if cfg.statistic.is_kl() {
        let split = Split {
            gram: &eval.gram,
            x: &identity[..n],
            y: &identity[n..],
        };
        let proj = split.kl_projection(cfg.truncation, cfg.mix)?;
        let effective = cfg.truncation.min(proj.len());
        let levels: Vec<usize> = (1..=effective).collect();
        let (truncations, values, _) = curve_from_projection(&proj, &levels, cfg.kl_variant())?;
        let observed = *values.last().expect("effective >= 1");
        let curve = DivergenceCurve {
            truncations,
            values,
            kernel,
            variant: cfg.kl_variant(),
            mix: cfg.mix,
            n_x: n,
            n_y: m,
            available_rank: proj.len(),
            rank_limited: effective < cfg.truncation,
        };
        (observed, effective, Some(curve))
    } else {
        (eval.evaluate(&identity, 0)?, 0, None)
    };

    let permutation_values = (0..cfg.permutations)
        .into_par_iter()
        .map(|b| eval.evaluate(&permutation(cfg.seed, b, n + m), effective))
        .collect::<Result<Vec<f64>>>()?;

    let exceed = permutation_values.iter().filter(|&&t| t >= observed).count();
    let p_value = (1 + exceed) as f64 / (cfg.permutations + 1) as f64;
    Ok(TestResult {
        statistic: cfg.statistic,
        kernel,
        observed,
        permutation_values,
        p_value,
        alpha: cfg.alpha,
        reject: p_value <= cfg.alpha,
        effective_truncation: effective,
        diagnostics,
    })
}
