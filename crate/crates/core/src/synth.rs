//! Seeded synthetic samples on compact domains.
//!
//! Streams come from ChaCha8 (`rand_chacha`, seeded with `seed_from_u64`).
//! Uniforms use the top 53 bits of each 64-bit word, offset by half a ulp so
//! they lie strictly inside `(0, 1)`. Normals use inverse-CDF sampling with
//! Acklam's rational approximation (relative error below `1.2e-9`), one
//! uniform per normal, so the stream layout is fixed.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::embeddings::Sample;
use crate::{Error, Result};

const DEFAULT_RADIUS: f64 = 3.0;
const MIN_ACCEPTANCE: f64 = 1e-6;
const ACCEPTANCE_WARMUP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    /// Uniform on `[-half_width, half_width]^d`.
    UniformCube { dim: usize, half_width: f64 },
    /// `mean + scale ∘ z` with `z` standard normal conditioned on `‖z‖ ≤ radius`.
    TruncatedGaussian {
        mean: Vec<f64>,
        scale: Vec<f64>,
        radius: f64,
    },
    /// Mixture of truncated Gaussians sharing one isotropic scale and radius.
    GaussianMixture {
        means: Vec<Vec<f64>>,
        scale: f64,
        weights: Vec<f64>,
        radius: f64,
    },
    /// `base + shift`.
    MeanShift {
        base: Box<DistributionSpec>,
        shift: Vec<f64>,
    },
    /// `factor · base`, scaled about the origin.
    ScaleChange {
        base: Box<DistributionSpec>,
        factor: f64,
    },
}

impl DistributionSpec {
    pub fn truncated_gaussian(dim: usize) -> Self {
        DistributionSpec::TruncatedGaussian {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            radius: DEFAULT_RADIUS,
        }
    }

    pub fn shifted(self, shift: Vec<f64>) -> Self {
        DistributionSpec::MeanShift {
            base: Box::new(self),
            shift,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::UniformCube { dim, .. } => *dim,
            DistributionSpec::TruncatedGaussian { mean, .. } => mean.len(),
            DistributionSpec::GaussianMixture { means, .. } => {
                means.first().map(Vec::len).unwrap_or(0)
            }
            DistributionSpec::MeanShift { base, .. } | DistributionSpec::ScaleChange { base, .. } => {
                base.dim()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::input(msg));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            DistributionSpec::UniformCube { dim, half_width } => {
                if *dim == 0 {
                    return bad("ucube needs d >= 1".into());
                }
                if !positive(*half_width) {
                    return bad(format!("half width must be positive, got {half_width}"));
                }
            }
            DistributionSpec::TruncatedGaussian {
                mean,
                scale,
                radius,
            } => {
                if mean.is_empty() || mean.len() != scale.len() {
                    return bad(format!(
                        "mean has {} entries, scale has {}",
                        mean.len(),
                        scale.len()
                    ));
                }
                if mean.iter().any(|v| !v.is_finite()) || !scale.iter().all(|s| positive(*s)) {
                    return bad("means must be finite and scales positive".into());
                }
                if !positive(*radius) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
            }
            DistributionSpec::GaussianMixture {
                means,
                scale,
                weights,
                radius,
            } => {
                let d = self.dim();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return bad("mixture means must share a nonzero dimension".into());
                }
                if weights.len() != means.len() {
                    return bad(format!("{} weights for {} components", weights.len(), means.len()));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return bad("mixture weights must be nonnegative".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights sum to {total}, expected 1"));
                }
                if !positive(*scale) || !positive(*radius) {
                    return bad("mixture scale and radius must be positive".into());
                }
            }
            DistributionSpec::MeanShift { base, shift } => {
                base.validate()?;
                if shift.len() != base.dim() || shift.iter().any(|v| !v.is_finite()) {
                    return bad(format!(
                        "shift has {} entries, distribution has dimension {}",
                        shift.len(),
                        base.dim()
                    ));
                }
            }
            DistributionSpec::ScaleChange { base, factor } => {
                base.validate()?;
                if !positive(*factor) {
                    return bad(format!("scale factor must be positive, got {factor}"));
                }
            }
        }
        Ok(())
    }

    /// Whether `x` lies in the declared compact support.
    pub fn contains(&self, x: &[f64]) -> bool {
        let ball = |x: &[f64], mean: &[f64], scale: &dyn Fn(usize) -> f64, radius: f64| {
            let r2: f64 = x
                .iter()
                .zip(mean)
                .enumerate()
                .map(|(i, (v, m))| ((v - m) / scale(i)).powi(2))
                .sum();
            r2 <= radius * radius * (1.0 + 1e-12)
        };
        match self {
            DistributionSpec::UniformCube { half_width, .. } => {
                x.iter().all(|v| v.abs() <= *half_width)
            }
            DistributionSpec::TruncatedGaussian {
                mean,
                scale,
                radius,
            } => ball(x, mean, &|i| scale[i], *radius),
            DistributionSpec::GaussianMixture {
                means,
                scale,
                radius,
                ..
            } => means.iter().any(|m| ball(x, m, &|_| *scale, *radius)),
            DistributionSpec::MeanShift { base, shift } => {
                let back: Vec<f64> = x.iter().zip(shift).map(|(v, s)| v - s).collect();
                base.contains(&back)
            }
            DistributionSpec::ScaleChange { base, factor } => {
                let back: Vec<f64> = x.iter().map(|v| v / factor).collect();
                base.contains(&back)
            }
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::UniformCube { dim, half_width } => {
                write!(f, "ucube:d={dim},hw={half_width}")
            }
            DistributionSpec::TruncatedGaussian {
                mean,
                scale,
                radius,
            } => write!(
                f,
                "tgauss:d={},mean={},scale={},radius={radius}",
                mean.len(),
                fmt_vec(mean),
                fmt_vec(scale)
            ),
            DistributionSpec::GaussianMixture {
                means,
                scale,
                weights,
                radius,
            } => {
                let ms = means.iter().map(|m| fmt_vec(m)).collect::<Vec<_>>().join("|");
                write!(
                    f,
                    "gmix:d={},means={ms},scale={scale},weights={},radius={radius}",
                    self.dim(),
                    fmt_vec(weights)
                )
            }
            DistributionSpec::MeanShift { base, shift } => write!(f, "{base}@shift={}", fmt_vec(shift)),
            DistributionSpec::ScaleChange { base, factor } => write!(f, "{base}@factor={factor}"),
        }
    }
}

fn parse_num(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}` expects a number, got `{v}`")))
}

fn parse_vec(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(';').map(|p| parse_num(key, p)).collect()
}

/// A scalar broadcasts to `d` entries.
fn broadcast(key: &str, v: Vec<f64>, d: Option<usize>) -> Result<Vec<f64>> {
    match (v.len(), d) {
        (1, Some(d)) => Ok(vec![v[0]; d]),
        (len, Some(d)) if len != d => Err(Error::Parse(format!(
            "`{key}` has {len} entries but d={d}"
        ))),
        _ => Ok(v),
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Grammar, whitespace-insensitive:
    ///
    /// ```text
    /// ucube:d=2,hw=1
    /// tgauss:d=2,mean=0.5;0,scale=1,radius=3
    /// gmix:d=2,means=0;0|2;2,scale=0.5,weights=0.3;0.7,radius=3
    /// <spec>@shift=1;0          mean shift
    /// <spec>@factor=2           scale change about the origin
    /// ```
    ///
    /// Vectors are `;`-separated; a single value broadcasts to dimension `d`.
    /// `radius` defaults to 3 and `weights` to uniform.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parts = s.split('@');
        let head = parts.next().unwrap_or_default();
        let (name, body) = head
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected `family:params`, got `{head}`")))?;
        let mut params = std::collections::BTreeMap::new();
        for kv in body.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`")))?;
            if params.insert(k, v).is_some() {
                return Err(Error::Parse(format!("duplicate parameter `{k}`")));
            }
        }
        let mut take = |k: &str| params.remove(k);
        let d = take("d")
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("`d` expects a positive integer, got `{v}`")))
            })
            .transpose()?;
        let radius = take("radius").map(|v| parse_num("radius", v)).transpose()?;
        let mut spec = match name {
            "ucube" => {
                let dim = d.ok_or_else(|| Error::Parse("ucube needs `d=`".into()))?;
                let hw = take("hw").map(|v| parse_num("hw", v)).transpose()?.unwrap_or(1.0);
                DistributionSpec::UniformCube {
                    dim,
                    half_width: hw,
                }
            }
            "tgauss" => {
                let mean = take("mean").map(|v| parse_vec("mean", v)).transpose()?;
                let d = d.or_else(|| mean.as_ref().map(Vec::len));
                let d = d.ok_or_else(|| Error::Parse("tgauss needs `d=` or `mean=`".into()))?;
                let mean = broadcast("mean", mean.unwrap_or_else(|| vec![0.0]), Some(d))?;
                let scale = take("scale").map(|v| parse_vec("scale", v)).transpose()?;
                let scale = broadcast("scale", scale.unwrap_or_else(|| vec![1.0]), Some(d))?;
                DistributionSpec::TruncatedGaussian {
                    mean,
                    scale,
                    radius: radius.unwrap_or(DEFAULT_RADIUS),
                }
            }
            "gmix" => {
                let means: Vec<Vec<f64>> = take("means")
                    .ok_or_else(|| Error::Parse("gmix needs `means=`".into()))?
                    .split('|')
                    .map(|m| parse_vec("means", m))
                    .collect::<Result<_>>()?;
                let means = means
                    .into_iter()
                    .map(|m| broadcast("means", m, d))
                    .collect::<Result<Vec<_>>>()?;
                let scale = take("scale").map(|v| parse_num("scale", v)).transpose()?.unwrap_or(1.0);
                let k = means.len();
                let weights = match take("weights") {
                    Some(w) => parse_vec("weights", w)?,
                    None => vec![1.0 / k as f64; k],
                };
                DistributionSpec::GaussianMixture {
                    means,
                    scale,
                    weights,
                    radius: radius.unwrap_or(DEFAULT_RADIUS),
                }
            }
            other => return Err(Error::Parse(format!("unknown distribution family `{other}`"))),
        };
        if let Some((k, _)) = params.into_iter().next() {
            return Err(Error::Parse(format!("unknown parameter `{k}` for `{name}`")));
        }
        for modifier in parts {
            let (k, v) = modifier
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value after `@`, got `{modifier}`")))?;
            spec = match k {
                "shift" => {
                    let shift = broadcast("shift", parse_vec(k, v)?, Some(spec.dim()))?;
                    DistributionSpec::MeanShift {
                        base: Box::new(spec),
                        shift,
                    }
                }
                "factor" => DistributionSpec::ScaleChange {
                    base: Box::new(spec),
                    factor: parse_num(k, v)?,
                },
                _ => return Err(Error::Parse(format!("unknown modifier `@{k}`"))),
            };
        }
        spec.validate()
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(spec)
    }
}

/// Uniform in the open interval `(0, 1)` from the top 53 bits.
#[inline]
pub(crate) fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Acklam's rational approximation to the standard normal quantile.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

#[inline]
fn standard_normal(rng: &mut impl RngCore) -> f64 {
    inverse_normal_cdf(open_unit(rng))
}

struct Acceptance {
    attempts: u64,
    accepted: u64,
}

impl Acceptance {
    fn record(&mut self, ok: bool) -> Result<()> {
        self.attempts += 1;
        if ok {
            self.accepted += 1;
        }
        if self.attempts >= ACCEPTANCE_WARMUP
            && (self.accepted as f64) < MIN_ACCEPTANCE * self.attempts as f64
        {
            return Err(Error::Pathological(format!(
                "truncation accepted {} of {} draws",
                self.accepted, self.attempts
            )));
        }
        Ok(())
    }
}

/// Draw `z ~ N(0, I)` conditioned on `‖z‖ ≤ radius` into `out`. Coordinates
/// are drawn in order and an attempt is abandoned at the first coordinate
/// whose running squared norm exceeds `radius²`.
fn truncated_standard(
    rng: &mut impl RngCore,
    radius: f64,
    out: &mut [f64],
    acc: &mut Acceptance,
) -> Result<()> {
    let r2 = radius * radius;
    loop {
        let mut norm2 = 0.0;
        let mut ok = true;
        for v in out.iter_mut() {
            *v = standard_normal(rng);
            norm2 += *v * *v;
            if norm2 > r2 {
                ok = false;
                break;
            }
        }
        acc.record(ok)?;
        if ok {
            return Ok(());
        }
    }
}

fn draw(
    spec: &DistributionSpec,
    rng: &mut impl RngCore,
    out: &mut [f64],
    acc: &mut Acceptance,
) -> Result<()> {
    match spec {
        DistributionSpec::UniformCube { half_width, .. } => {
            for v in out.iter_mut() {
                *v = half_width * (2.0 * open_unit(rng) - 1.0);
            }
        }
        DistributionSpec::TruncatedGaussian {
            mean,
            scale,
            radius,
        } => {
            truncated_standard(rng, *radius, out, acc)?;
            for (i, v) in out.iter_mut().enumerate() {
                *v = mean[i] + scale[i] * *v;
            }
        }
        DistributionSpec::GaussianMixture {
            means,
            scale,
            weights,
            radius,
        } => {
            let u = open_unit(rng);
            let mut cum = 0.0;
            let mut comp = means.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                cum += w;
                if u < cum {
                    comp = i;
                    break;
                }
            }
            truncated_standard(rng, *radius, out, acc)?;
            for (i, v) in out.iter_mut().enumerate() {
                *v = means[comp][i] + scale * *v;
            }
        }
        DistributionSpec::MeanShift { base, shift } => {
            draw(base, rng, out, acc)?;
            for (v, s) in out.iter_mut().zip(shift) {
                *v += s;
            }
        }
        DistributionSpec::ScaleChange { base, factor } => {
            draw(base, rng, out, acc)?;
            for v in out.iter_mut() {
                *v *= factor;
            }
        }
    }
    Ok(())
}

/// `n` i.i.d. draws from `spec`; deterministic in `(spec, n, seed)`.
pub fn generate(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::input("sample size must be at least 1"));
    }
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Acceptance {
        attempts: 0,
        accepted: 0,
    };
    let mut data = vec![0.0; n * d];
    for row in data.chunks_exact_mut(d) {
        draw(spec, &mut rng, row, &mut acc)?;
    }
    Sample::new(data, d)
}
