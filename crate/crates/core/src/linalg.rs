//! Dense symmetric eigendecompositions and SPD solves.
//!
//! Full decompositions are delegated to nalgebra's Householder-tridiagonal QR
//! solver. Leading eigenpairs of large matrices come from a Lanczos iteration
//! with full reorthogonalization and a fixed start vector, so repeated calls
//! on the same input give bit-identical output.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::{Error, Result};

/// Symmetric eigendecomposition, eigenvalues in descending order. Column `i`
/// of `eigenvectors` pairs with `eigenvalues[i]`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Zero out eigenvalues in `[-tol·λ_max, 0)` with `tol = 1e-10`.
    /// Intended for inputs that are PSD in exact arithmetic (Gram matrices).
    pub fn clamp_psd(&mut self) {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        let thresh = 1e-10 * top;
        for v in &mut self.eigenvalues {
            if *v < 0.0 && *v >= -thresh {
                *v = 0.0;
            }
        }
    }

    /// Keep only the leading `k` pairs.
    pub fn truncate(&mut self, k: usize) {
        if k < self.eigenvalues.len() {
            self.eigenvalues.truncate(k);
            self.eigenvectors = self.eigenvectors.columns(0, k).into_owned();
        }
    }

    /// `V Λ Vᵀ`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lam);
        }
        scaled * self.eigenvectors.transpose()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::input(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::input("matrix has non-finite entries"));
            }
            if (a - b).abs() > 1e-10 {
                return Err(Error::input(format!(
                    "matrix is not symmetric: |M[{i},{j}] - M[{j},{i}]| = {:e}",
                    (a - b).abs()
                )));
            }
        }
        if !m[(j, j)].is_finite() {
            return Err(Error::input("matrix has non-finite entries"));
        }
    }
    Ok(())
}

fn sort_descending(values: &[f64], vectors: &DMatrix<f64>) -> EigenDecomposition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| {
        vectors[(r, order[c])]
    });
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_symmetric(m)?;
    dense_eig(m)
}

fn dense_eig(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let max_iter = (60 * n).max(1000);
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, max_iter)
        .ok_or_else(|| {
            Error::Numerical(format!("symmetric eigensolver did not converge ({n}x{n})"))
        })?;
    Ok(sort_descending(eig.eigenvalues.as_slice(), &eig.eigenvectors))
}

/// Below this size, or when more than a third of the spectrum is requested,
/// [`sym_eig_top`] falls back to the dense solver.
const LANCZOS_MIN_DIM: usize = 64;
const LANCZOS_TOL: f64 = 1e-12;

/// Leading `k` eigenpairs of a symmetric matrix (descending).
///
/// Large matrices use Lanczos with full (two-pass Gram–Schmidt)
/// reorthogonalization, started from a fixed pseudo-random vector, and stop
/// once every requested Ritz pair has residual `≤ 1e-12·|θ₁|`. The iteration
/// restarts on invariant subspaces, so it also terminates with the exact
/// answer after at most `n` steps.
pub fn sym_eig_top(m: &DMatrix<f64>, k: usize) -> Result<EigenDecomposition> {
    check_symmetric(m)?;
    let n = m.nrows();
    let k = k.min(n);
    if n <= LANCZOS_MIN_DIM || 3 * k >= n {
        let mut eig = dense_eig(m)?;
        eig.truncate(k);
        return Ok(eig);
    }
    if k == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(n, 0),
        });
    }
    lanczos(m, k)
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn next_symmetric(&mut self) -> f64 {
        ((self.next() >> 11) as f64) * (1.0 / (1u64 << 53) as f64) - 0.5
    }
}

/// Orthogonalize `w` against the first `cols` columns stored in `basis`
/// (column-major, `n` rows each), twice.
fn reorthogonalize(basis: &[f64], n: usize, cols: usize, w: &mut DVector<f64>) {
    if cols == 0 {
        return;
    }
    let q = DMatrixView::from_slice(&basis[..n * cols], n, cols);
    for _ in 0..2 {
        let h = q.tr_mul(w);
        w.gemv(-1.0, &q, &h, 1.0);
    }
}

fn lanczos(m: &DMatrix<f64>, k: usize) -> Result<EigenDecomposition> {
    let n = m.nrows();
    let mut rng = SplitMix64(0x6B67_6175_7373_0001);
    let mut basis: Vec<f64> = Vec::with_capacity(n * (3 * k + 32).min(n));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let scale = m.amax().max(f64::MIN_POSITIVE);

    let fresh_vector = |rng: &mut SplitMix64, basis: &[f64], cols: usize| -> Option<DVector<f64>> {
        for _ in 0..4 {
            let mut v = DVector::from_fn(n, |_, _| rng.next_symmetric());
            reorthogonalize(basis, n, cols, &mut v);
            let norm = v.norm();
            if norm > 1e-8 {
                return Some(v / norm);
            }
        }
        None
    };

    let mut q = fresh_vector(&mut rng, &basis, 0).expect("n > 0");
    let mut w = DVector::zeros(n);
    loop {
        let j = alphas.len();
        basis.extend_from_slice(q.as_slice());
        w.gemv(1.0, m, &q, 0.0);
        let a = q.dot(&w);
        alphas.push(a);
        reorthogonalize(&basis, n, j + 1, &mut w);
        let mut b = w.norm();
        let steps = j + 1;

        let mut next = None;
        if steps < n {
            if b > 1e-12 * scale {
                next = Some(&w / b);
            } else {
                // invariant subspace: continue from a fresh direction, T decouples
                b = 0.0;
                next = fresh_vector(&mut rng, &basis, steps);
            }
        }

        let check = steps >= k && (steps % 8 == 0 || next.is_none() || steps == n);
        if check {
            let t = tridiagonal(&alphas, &betas);
            let eig = dense_eig(&t)?;
            let theta1 = eig.eigenvalues[0].abs().max(eig.eigenvalues[steps - 1].abs());
            let converged = next.is_none()
                || (0..k).all(|i| {
                    (b * eig.eigenvectors[(steps - 1, i)]).abs() <= LANCZOS_TOL * theta1.max(scale * 1e-300)
                });
            if converged {
                let q_mat = DMatrixView::from_slice(&basis, n, steps);
                let kk = k.min(steps);
                let s = eig.eigenvectors.columns(0, kk);
                let vectors = q_mat * s;
                return Ok(EigenDecomposition {
                    eigenvalues: eig.eigenvalues[..kk].to_vec(),
                    eigenvectors: vectors,
                });
            }
        }
        match next {
            Some(v) => {
                betas.push(b);
                q = v;
            }
            None => {
                return Err(Error::Numerical(
                    "Lanczos iteration could not extend its Krylov basis".into(),
                ))
            }
        }
    }
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let s = alphas.len();
    let mut t = DMatrix::zeros(s, s);
    for i in 0..s {
        t[(i, i)] = alphas[i];
        if i + 1 < s {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

/// Solve `M x = b` for symmetric positive-definite `M` by Cholesky.
pub fn solve_spd(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_symmetric(m)?;
    if b.len() != m.nrows() {
        return Err(Error::input(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}
