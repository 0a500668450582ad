//! Command-line front end for `kgauss`: two-sample tests, divergence curves,
//! spectra of covariance embeddings and synthetic data.
//!
//! Exit codes: 0 completed, 1 usage or configuration error, 2 data or parse
//! error, 3 numerical failure.

pub mod data;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use kgauss::divergences::{divergence_curve_with, KlKind, KlVariant};
use kgauss::embeddings::{cov_embed, trace, Sample};
use kgauss::kernels::{KernelChoice, KernelSpec};
use kgauss::spectral::{cov_spectrum, EigenFloor};
use kgauss::synth::{generate, DistributionSpec};
use kgauss::testing::{median_distance, permutation_test, resolve_kernel, Statistic, TestConfig};

use report::{format_float, tsv, Outcome, RunReport, Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 1, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<kgauss::Error> for CliError {
    fn from(e: kgauss::Error) -> Self {
        use kgauss::Error::*;
        let code = match e {
            Input(_) | Parse(_) | Pathological(_) | UnsupportedOracle(_) => 1,
            DegenerateData(_) => 2,
            Numerical(_) | DegenerateSpectrum(_) | Domain(_) => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "kgauss", version, about = "Kernel Gaussian embedding two-sample tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Permutation two-sample test.
    Test(TestArgs),
    /// Projected KL divergence as a function of the truncation level.
    Curve(CurveArgs),
    /// Eigenvalues of the empirical covariance embedding of one sample.
    Spectrum(SpectrumArgs),
    /// Draw a synthetic sample.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct Io {
    /// Field delimiter of the input files (`tab` for TSV).
    #[arg(long, default_value = ",", value_parser = data::parse_delimiter)]
    delim: u8,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record the wall time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value = "kl-exact", value_parser = parse_statistic)]
    stat: Statistic,
    #[arg(long, default_value = "rbf:median", value_parser = parse_kernel)]
    kernel: KernelChoice,
    #[arg(long, default_value_t = 20)]
    n_trunc: usize,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Number of permutations.
    #[arg(long, default_value_t = 199)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    centred: bool,
    #[arg(long)]
    mix: bool,
    #[command(flatten)]
    io: Io,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// `kl-exact` or `kl-diag`.
    #[arg(long, default_value = "kl-exact", value_parser = parse_statistic)]
    stat: Statistic,
    #[arg(long, default_value = "rbf:median", value_parser = parse_kernel)]
    kernel: KernelChoice,
    /// Evaluate at 1..=N when --trunc is not given.
    #[arg(long, default_value_t = 20)]
    n_trunc: usize,
    /// Truncation levels: `a:b` (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_levels)]
    trunc: Option<Levels>,
    #[arg(long)]
    centred: bool,
    #[arg(long)]
    mix: bool,
    /// Write the (N, value) table here as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[command(flatten)]
    io: Io,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long, default_value = "rbf:median", value_parser = parse_kernel)]
    kernel: KernelChoice,
    /// Keep at most this many eigenvalues (default: all above the floor).
    #[arg(long)]
    n_trunc: Option<usize>,
    /// Write the (index, eigenvalue) table here as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[command(flatten)]
    io: Io,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// e.g. `ucube:d=2,hw=1` or `tgauss:d=2,mean=0.5;0,scale=1,radius=3`.
    #[arg(long, value_parser = parse_spec)]
    spec: DistributionSpec,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ",", value_parser = data::parse_delimiter)]
    delim: u8,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Levels(Vec<usize>);

fn parse_levels(s: &str) -> Result<Levels, String> {
    parse_truncations(s).map(Levels)
}

fn parse_statistic(s: &str) -> Result<Statistic, String> {
    s.parse().map_err(|e: kgauss::Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelChoice, String> {
    s.parse().map_err(|e: kgauss::Error| e.to_string())
}

fn parse_spec(s: &str) -> Result<DistributionSpec, String> {
    s.parse().map_err(|e: kgauss::Error| e.to_string())
}

/// `a:b` expands to `a..=b`; otherwise a comma-separated list.
pub fn parse_truncations(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{t}` is not a truncation level"))
    };
    let levels: Vec<usize> = if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty range {a}:{b}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if levels.first() == Some(&0) {
        return Err("truncation levels start at 1".into());
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err("truncation levels must be strictly ascending".into());
    }
    Ok(levels)
}

fn read_pair(x: &Path, y: &Path, delim: u8) -> Result<(Sample, Sample), CliError> {
    let xs = data::read_sample(x, delim)?;
    let ys = data::read_sample(y, delim)?;
    if xs.dim() != ys.dim() {
        return Err(CliError::data(format!(
            "{} has {} columns but {} has {}",
            x.display(),
            xs.dim(),
            y.display(),
            ys.dim()
        )));
    }
    Ok((xs, ys))
}

fn write_to(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::data(format!("{}: cannot write: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::data(format!("stdout: {e}")))
        }
    }
}

fn finish(mut report: RunReport, io: &Io, start: Instant) -> Result<(), CliError> {
    if io.timing {
        report.wall_time_secs = Some(start.elapsed().as_secs_f64());
    }
    write_to(io.out.as_deref(), &report.to_json())
}

fn config(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn delim_str(d: u8) -> String {
    if d == b'\t' {
        "tab".into()
    } else {
        (d as char).to_string()
    }
}

fn cmd_test(a: &TestArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = TestConfig {
        statistic: a.stat,
        kernel: a.kernel,
        truncation: a.n_trunc,
        epsilon: a.epsilon,
        permutations: a.b,
        alpha: a.alpha,
        seed: a.seed,
        centred: a.centred,
        mix: a.mix,
    };
    cfg.validate()?;
    let (x, y) = read_pair(&a.x, &a.y, a.io.delim)?;
    let result = permutation_test(&cfg, &x, &y)?;
    let cfg_map = config(&[
        ("x", a.x.display().to_string()),
        ("y", a.y.display().to_string()),
        ("stat", a.stat.to_string()),
        ("kernel", a.kernel.to_string()),
        ("n_trunc", a.n_trunc.to_string()),
        ("epsilon", format_float(a.epsilon)),
        ("b", a.b.to_string()),
        ("alpha", format_float(a.alpha)),
        ("seed", a.seed.to_string()),
        ("centred", a.centred.to_string()),
        ("mix", a.mix.to_string()),
        ("delim", delim_str(a.io.delim)),
    ]);
    finish(RunReport::new("test", cfg_map, Outcome::Test(result)), &a.io, start)
}

fn cmd_curve(a: &CurveArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let kind = match a.stat {
        Statistic::KlExact => KlKind::Exact,
        Statistic::KlDiag => KlKind::Diagonal,
        other => {
            return Err(CliError::usage(format!(
                "curve needs a KL statistic (kl-exact or kl-diag), got {other}"
            )))
        }
    };
    let levels = match &a.trunc {
        Some(l) => l.0.clone(),
        None if a.n_trunc >= 1 => (1..=a.n_trunc).collect(),
        None => return Err(CliError::usage("--n-trunc must be at least 1")),
    };
    let (x, y) = read_pair(&a.x, &a.y, a.io.delim)?;
    let kernel = resolve_kernel(&a.kernel, &x, &y)?;
    let variant = KlVariant { kind, centred: a.centred };
    let curve = divergence_curve_with(&kernel, &x, &y, &levels, variant, a.mix)?;
    if let Some(p) = &a.tsv {
        let table = tsv(("N", "kl"), curve.truncations.iter().copied().zip(&curve.values));
        write_to(Some(p), &table)?;
    }
    let first = levels[0];
    let last = *levels.last().expect("nonempty");
    let cfg_map = config(&[
        ("x", a.x.display().to_string()),
        ("y", a.y.display().to_string()),
        ("stat", a.stat.to_string()),
        ("kernel", a.kernel.to_string()),
        ("trunc", if levels.len() == last - first + 1 {
            format!("{first}:{last}")
        } else {
            levels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        }),
        ("centred", a.centred.to_string()),
        ("mix", a.mix.to_string()),
        ("delim", delim_str(a.io.delim)),
    ]);
    finish(RunReport::new("curve", cfg_map, Outcome::Curve(curve)), &a.io, start)
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if a.n_trunc == Some(0) {
        return Err(CliError::usage("--n-trunc must be at least 1"));
    }
    let x = data::read_sample(&a.x, a.io.delim)?;
    let kernel = match a.kernel {
        KernelChoice::Fixed(k) => k,
        KernelChoice::RbfMedian => KernelSpec::rbf(median_distance(&x)?)?,
    };
    let s = cov_embed(&kernel, &x)?;
    let basis = cov_spectrum(&s, a.n_trunc.unwrap_or(x.len()), EigenFloor::default())?;
    let spectrum = Spectrum {
        kernel,
        n: x.len(),
        eigenvalues: basis.eigenvalues,
        trace: trace(&s),
    };
    if let Some(p) = &a.tsv {
        write_to(Some(p), &tsv(("index", "eigenvalue"), (1..).zip(&spectrum.eigenvalues)))?;
    }
    let cfg_map = config(&[
        ("x", a.x.display().to_string()),
        ("kernel", a.kernel.to_string()),
        ("n_trunc", a.n_trunc.map_or("all".into(), |n| n.to_string())),
        ("delim", delim_str(a.io.delim)),
    ]);
    finish(RunReport::new("spectrum", cfg_map, Outcome::Spectrum(spectrum)), &a.io, start)
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let sample = generate(&a.spec, a.n, a.seed)?;
    let sep = (a.delim as char).to_string();
    let mut out = String::new();
    for row in sample.rows() {
        let fields: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        out.push_str(&fields.join(&sep));
        out.push('\n');
    }
    write_to(a.out.as_deref(), &out)
}

/// Parse `args` and run the selected command, printing diagnostics to
/// stderr. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let res = match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kgauss: {e}");
            e.code
        }
    }
}
