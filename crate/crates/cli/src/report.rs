//! Run reports and plot-ready tables.

use std::collections::BTreeMap;

use kgauss::divergences::DivergenceCurve;
use kgauss::kernels::KernelSpec;
use kgauss::testing::TestResult;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    /// Effective settings, as given on the command line or defaulted.
    pub config: BTreeMap<String, String>,
    pub result: Outcome,
    /// Only recorded with `--timing`, so that reports stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Test(TestResult),
    Curve(DivergenceCurve),
    Spectrum(Spectrum),
}

/// Eigenvalues of an empirical covariance embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub kernel: KernelSpec,
    pub n: usize,
    #[serde(with = "kgauss::serde_ext::float_vec")]
    pub eigenvalues: Vec<f64>,
    /// `(1/n) Σ k(xᵢ, xᵢ)`, the trace of the operator.
    #[serde(with = "kgauss::serde_ext::float")]
    pub trace: f64,
}

impl RunReport {
    pub fn new(command: &str, config: BTreeMap<String, String>, result: Outcome) -> Self {
        RunReport {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            result,
            wall_time_secs: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        ryu::Buffer::new().format_finite(v).to_string()
    }
}

/// Two-column TSV with a header line.
pub fn tsv<'a>(header: (&str, &str), rows: impl IntoIterator<Item = (usize, &'a f64)>) -> String {
    let mut out = format!("{}\t{}\n", header.0, header.1);
    for (k, v) in rows {
        out.push_str(&format!("{k}\t{}\n", format_float(*v)));
    }
    out
}
