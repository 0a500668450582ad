use kgauss::divergences::{divergence_curve, projected_kl, KlVariant};
use kgauss::embeddings::{mean_embed, GaussianEmbedding};
use kgauss::kernels::{gram_symmetric, KernelChoice};
use kgauss::spectral::{cov_spectrum, project_gaussian, EigenFloor};
use kgauss::synth::{generate, DistributionSpec};
use kgauss::testing::{permutation_test, resolve_kernel, Statistic, TestConfig, TestResult};

fn pair(shift: f64, n: usize, seed: u64) -> (kgauss::embeddings::Sample, kgauss::embeddings::Sample) {
    let p = DistributionSpec::truncated_gaussian(2);
    let q = p.clone().shifted(vec![shift, 0.0]);
    (generate(&p, n, seed).unwrap(), generate(&q, n, seed + 1).unwrap())
}

#[test]
fn kernel_grammar_round_trips() {
    for s in ["rbf:sigma=0.5", "laplace:scale=2", "poly:degree=3,offset=1,scale=0.5", "rbf:median"] {
        let k: KernelChoice = s.parse().unwrap();
        let again: KernelChoice = k.to_string().parse().unwrap();
        assert_eq!(k, again);
    }
    assert!("rbf:sigma=-1".parse::<KernelChoice>().is_err());
    assert!("cosine".parse::<KernelChoice>().is_err());
}

#[test]
fn projected_gaussians_give_the_same_kl() {
    let (x, y) = pair(0.7, 80, 5);
    let k = resolve_kernel(&KernelChoice::RbfMedian, &x, &y).unwrap();
    let g = gram_symmetric(&k, &x).unwrap();
    assert!(g.symmetric);

    let gp = GaussianEmbedding::from_sample(&k, &x, false).unwrap();
    let gq = GaussianEmbedding::from_sample(&k, &y, false).unwrap();
    let basis = cov_spectrum(&gp.cov, 8, EigenFloor::default()).unwrap();
    let pp = project_gaussian(&basis, &gp).unwrap();
    let pq = project_gaussian(&basis, &gq).unwrap();

    // diagonal of the P projection is the spectrum itself
    for (i, l) in basis.eigenvalues.iter().enumerate() {
        assert!((pp.covariance[(i, i)] - l).abs() <= 1e-10 * basis.eigenvalues[0]);
    }

    let n = basis.len();
    let lam_inv: Vec<f64> = basis.eigenvalues.iter().map(|l| 1.0 / l).collect();
    let mu = &pp.mean - &pq.mean;
    let whitened = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        pq.covariance[(i, j)] * (lam_inv[i] * lam_inv[j]).sqrt()
    });
    let trace: f64 = whitened.diagonal().sum();
    let logdet = whitened.clone().cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
    let mean_term: f64 = (0..n).map(|i| mu[i] * mu[i] * lam_inv[i]).sum();
    let want = 0.5 * (mean_term + trace - n as f64 - logdet);

    let (mp, mq) = (mean_embed(&k, &x).unwrap(), mean_embed(&k, &y).unwrap());
    let got = projected_kl(&basis, &mp, &mq, &gq.cov, n, KlVariant::EXACT).unwrap();
    assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");

    let levels: Vec<usize> = (1..=n).collect();
    let curve = divergence_curve(&k, &x, &y, &levels, KlVariant::EXACT).unwrap();
    assert!((curve.values[n - 1] - want).abs() <= 1e-8 * want.max(1.0));
}

#[test]
fn test_detects_shift_and_report_serializes() {
    let (x, y) = pair(1.5, 60, 9);
    for statistic in [Statistic::Mmd, Statistic::KlExact, Statistic::Mahalanobis] {
        let cfg = TestConfig {
            statistic,
            permutations: 99,
            seed: 4,
            ..TestConfig::default()
        };
        let r = permutation_test(&cfg, &x, &y).unwrap();
        assert!(r.reject, "{statistic}: p = {}", r.p_value);
        assert!((r.p_value - 0.01).abs() < 1e-12);

        let text = serde_json::to_string(&r).unwrap();
        let back: TestResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}

#[test]
fn null_p_values_are_not_small() {
    let (x, _) = pair(0.0, 50, 21);
    let (y, _) = pair(0.0, 50, 31);
    let cfg = TestConfig {
        statistic: Statistic::KlDiag,
        permutations: 99,
        ..TestConfig::default()
    };
    let r = permutation_test(&cfg, &x, &y).unwrap();
    assert!(r.p_value > 0.01);
    assert!(r.effective_truncation >= 1 && r.effective_truncation <= 20);
}
