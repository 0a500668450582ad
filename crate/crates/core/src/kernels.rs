//! Positive-semidefinite kernels, Gram matrices and the explicit feature map
//! of the linear (degree-one polynomial) kernel.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::Sample;
use crate::{Error, Result};

/// A parametrized kernel family.
///
/// * `Rbf`: `exp(-‖x - y‖² / (2σ²))`
/// * `Laplace`: `exp(-‖x - y‖₁ / s)`
/// * `Polynomial`: `(a⟨x, y⟩ + c)^d`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Rbf { bandwidth: f64 },
    Laplace { scale: f64 },
    Polynomial { degree: u32, offset: f64, scale: f64 },
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Rbf { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        let k = KernelSpec::Laplace { scale };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(degree: u32, offset: f64, scale: f64) -> Result<Self> {
        let k = KernelSpec::Polynomial {
            degree,
            offset,
            scale,
        };
        k.validate()?;
        Ok(k)
    }

    /// The linear kernel `⟨x, y⟩`.
    pub fn linear() -> Self {
        KernelSpec::Polynomial {
            degree: 1,
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::input(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            KernelSpec::Rbf { bandwidth } => positive("rbf bandwidth", bandwidth),
            KernelSpec::Laplace { scale } => positive("laplace scale", scale),
            KernelSpec::Polynomial {
                degree,
                offset,
                scale,
            } => {
                if degree == 0 {
                    return Err(Error::input("polynomial degree must be at least 1"));
                }
                if !(offset.is_finite() && offset >= 0.0) {
                    return Err(Error::input(format!(
                        "polynomial offset must be nonnegative, got {offset}"
                    )));
                }
                positive("polynomial scale", scale)
            }
        }
    }

    /// `k(x, y)` without the dimension check.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { bandwidth } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Laplace { scale } => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                (-l1 / scale).exp()
            }
            KernelSpec::Polynomial {
                degree,
                offset,
                scale,
            } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (scale * dot + offset).powi(degree as i32)
            }
        }
    }

    /// Whether `k(x, x) = 1` for every `x`.
    pub fn has_unit_diagonal(&self) -> bool {
        matches!(self, KernelSpec::Rbf { .. } | KernelSpec::Laplace { .. })
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Rbf { bandwidth } => write!(f, "rbf:sigma={bandwidth}"),
            KernelSpec::Laplace { scale } => write!(f, "laplace:scale={scale}"),
            KernelSpec::Polynomial {
                degree,
                offset,
                scale,
            } => write!(f, "poly:degree={degree},offset={offset},scale={scale}"),
        }
    }
}

/// A kernel as requested on the command line: either fully specified, or an
/// RBF kernel whose bandwidth is set by the median heuristic on the pooled
/// sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Fixed(KernelSpec),
    #[default]
    RbfMedian,
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelChoice::Fixed(k) => k.fmt(f),
            KernelChoice::RbfMedian => f.write_str("rbf:median"),
        }
    }
}

fn parse_params(body: &str) -> Result<Vec<(&str, &str)>> {
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    body.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`")))
        })
        .collect()
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{key}` expects a number, got `{v}`")))
}

impl FromStr for KernelChoice {
    type Err = Error;

    /// Grammar: `rbf:sigma=1.0`, `rbf:median`, `laplace:scale=1.0`,
    /// `poly:degree=1,offset=0,scale=1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "rbf" => {
                if body.trim() == "median" {
                    return Ok(KernelChoice::RbfMedian);
                }
                let mut sigma = None;
                for (k, v) in parse_params(body)? {
                    match k {
                        "sigma" | "bandwidth" => sigma = Some(parse_f64(k, v)?),
                        _ => return Err(Error::Parse(format!("unknown rbf parameter `{k}`"))),
                    }
                }
                let sigma =
                    sigma.ok_or_else(|| Error::Parse("rbf needs `sigma=` or `median`".into()))?;
                Ok(KernelChoice::Fixed(KernelSpec::rbf(sigma)?))
            }
            "laplace" => {
                let mut scale = None;
                for (k, v) in parse_params(body)? {
                    match k {
                        "scale" => scale = Some(parse_f64(k, v)?),
                        _ => {
                            return Err(Error::Parse(format!("unknown laplace parameter `{k}`")))
                        }
                    }
                }
                let scale = scale.ok_or_else(|| Error::Parse("laplace needs `scale=`".into()))?;
                Ok(KernelChoice::Fixed(KernelSpec::laplace(scale)?))
            }
            "poly" | "polynomial" => {
                let (mut degree, mut offset, mut scale) = (1u32, 0.0, 1.0);
                for (k, v) in parse_params(body)? {
                    match k {
                        "degree" => {
                            degree = v.parse().map_err(|_| {
                                Error::Parse(format!("`degree` expects a positive integer, got `{v}`"))
                            })?
                        }
                        "offset" => offset = parse_f64(k, v)?,
                        "scale" => scale = parse_f64(k, v)?,
                        _ => return Err(Error::Parse(format!("unknown poly parameter `{k}`"))),
                    }
                }
                Ok(KernelChoice::Fixed(KernelSpec::polynomial(degree, offset, scale)?))
            }
            _ => Err(Error::Parse(format!("unknown kernel `{name}`"))),
        }
    }
}

/// Evaluate `k(x, y)`.
pub fn eval(kernel: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::input("points must have dimension at least 1"));
    }
    Ok(kernel.eval_unchecked(x, y))
}

/// Matrix of kernel evaluations between two samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    /// Built from one sample against itself, mirrored from the upper triangle.
    pub symmetric: bool,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// `K[i, j] = k(xᵢ, yⱼ)`. Passing the same sample twice (by reference) takes
/// the symmetric path.
pub fn gram(kernel: &KernelSpec, x: &Sample, y: &Sample) -> Result<GramMatrix> {
    if std::ptr::eq(x, y) {
        return gram_symmetric(kernel, x);
    }
    if x.dim() != y.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(GramMatrix {
        values: cross_gram(kernel, x, y),
        symmetric: false,
    })
}

/// Gram matrix of a sample against itself; exactly symmetric.
pub fn gram_symmetric(kernel: &KernelSpec, x: &Sample) -> Result<GramMatrix> {
    kernel.validate()?;
    Ok(GramMatrix {
        values: self_gram(kernel, x),
        symmetric: true,
    })
}

pub(crate) fn cross_gram(kernel: &KernelSpec, x: &Sample, y: &Sample) -> DMatrix<f64> {
    let (n, m) = (x.len(), y.len());
    let mut rows = vec![0.0; n * m];
    rows.par_chunks_mut(m.max(1)).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = kernel.eval_unchecked(xi, y.row(j));
        }
    });
    DMatrix::from_row_slice(n, m, &rows)
}

pub(crate) fn self_gram(kernel: &KernelSpec, x: &Sample) -> DMatrix<f64> {
    let n = x.len();
    let mut rows = vec![0.0; n * n];
    rows.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for j in i..n {
            row[j] = kernel.eval_unchecked(xi, x.row(j));
        }
    });
    for i in 0..n {
        for j in 0..i {
            rows[i * n + j] = rows[j * n + i];
        }
    }
    DMatrix::from_row_slice(n, n, &rows)
}

/// The kernel `k²`: `eval(squared(k), x, y) = eval(k, x, y)²`.
pub fn squared(kernel: &KernelSpec) -> KernelSpec {
    match *kernel {
        KernelSpec::Rbf { bandwidth } => KernelSpec::Rbf {
            bandwidth: bandwidth / std::f64::consts::SQRT_2,
        },
        KernelSpec::Laplace { scale } => KernelSpec::Laplace { scale: scale / 2.0 },
        KernelSpec::Polynomial {
            degree,
            offset,
            scale,
        } => KernelSpec::Polynomial {
            degree: 2 * degree,
            offset,
            scale,
        },
    }
}

/// Explicit features of the degree-one polynomial kernel,
/// `φ(x) = (√a·x₁, …, √a·x_d, √c)`; the constant coordinate is dropped when
/// `c = 0`.
pub fn explicit_feature_map(kernel: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    match *kernel {
        KernelSpec::Polynomial {
            degree: 1,
            offset,
            scale,
        } => {
            let ra = scale.sqrt();
            let mut phi: Vec<f64> = x.iter().map(|v| ra * v).collect();
            if offset != 0.0 {
                phi.push(offset.sqrt());
            }
            Ok(phi)
        }
        other => Err(Error::UnsupportedOracle(format!(
            "no finite explicit feature map for {other}"
        ))),
    }
}
