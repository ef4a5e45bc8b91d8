use num_complex::Complex64;

use shrinkage_core::functionals::{companion_boundary, lp_covariance_shrinker, m_functional, Family, ShrinkageFunction};
use shrinkage_core::lda::{theta, LdaModelParams};
use shrinkage_core::montecarlo::{
    empirical_frobenius_loss, generate_regression_draw, kernel_estimate_fg, run_lda_errors, run_regression_curve,
    trace_functional_experiment, Covariance, ExperimentConfig, SampleEigen, SigmaSpec, Summary, ZDist,
};
use shrinkage_core::regression::{predicted_test_risk, RegressionModelParams};
use shrinkage_core::{AspectRatio, LimitingSpectrum, PopulationSpectrum};

fn config(p: usize, n: usize, alpha: f64, sigma: SigmaSpec, replicates: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig { p, n, alpha, sigma, z_dist: ZDist::Gaussian, seed, replicates }
}

fn two_atoms() -> PopulationSpectrum {
    PopulationSpectrum::uniform(&[1.0, 4.0]).unwrap()
}

fn within(value: f64, s: &Summary, sds: f64) -> bool {
    (s.mean - value).abs() <= sds * s.se
}

#[test]
fn sample_trace_moments_match_exact_wishart_values() {
    // With h(x) = x and Gaussian data, E p⁻¹tr(ΣS) = p⁻¹tr Σ² and
    // E p⁻¹tr(ΣSΣS) = (1 + 1/n) p⁻¹tr Σ⁴ + (p/n) (p⁻¹tr Σ²)² hold exactly.
    let (p, n) = (150, 100);
    let h = two_atoms();
    let sigma = SigmaSpec::Atoms { population: h.clone() };
    let cfg = config(p, n, 0.0, sigma.clone(), 160, 4242);
    let cov = Covariance::build(&sigma, p).unwrap();
    let spec = LimitingSpectrum::build(&h, cfg.gamma().unwrap(), 256).unwrap();
    let x = ShrinkageFunction::from(Family::Identity);
    let samples = trace_functional_experiment(&cfg, &cov, &[x.evaluator(&spec).unwrap()], &[]).unwrap();
    let (m, t) = (samples.m_summary(0), samples.t_summary(0));
    let gamma = p as f64 / n as f64;
    let t_exact = 128.5 * (1.0 + 1.0 / n as f64) + gamma * 8.5 * 8.5;
    assert!(within(8.5, &m, 3.0), "M {m:?}");
    assert!(within(t_exact, &t, 3.0), "T {t:?} vs {t_exact}");
    assert!((m_functional(&spec, &x).unwrap().value - 8.5).abs() < 1e-6);
}

#[test]
fn top_eigenvalue_approaches_upper_edge() {
    let sigma = SigmaSpec::Atoms { population: PopulationSpectrum::point_mass(1.0).unwrap() };
    let cfg = config(400, 800, 0.0, sigma.clone(), 3, 5);
    let cov = Covariance::build(&sigma, 400).unwrap();
    let edge = (1.0 + 0.5f64.sqrt()).powi(2);
    for r in 0..3 {
        let d = generate_regression_draw(&cfg, &cov, r).unwrap();
        let top = *SampleEigen::from_data(&d.x).unwrap().lambda.last().unwrap();
        assert!((top - edge).abs() < 0.08, "replicate {r}: {top} vs {edge}");
    }
}

#[test]
fn kernel_estimate_tracks_boundary_values() {
    let (p, n) = (1000, 2000);
    let pop = PopulationSpectrum::point_mass(1.0).unwrap();
    let sigma = SigmaSpec::Atoms { population: pop.clone() };
    let cfg = config(p, n, 0.0, sigma.clone(), 1, 77);
    let cov = Covariance::build(&sigma, p).unwrap();
    let d = generate_regression_draw(&cfg, &cov, 0).unwrap();
    let eig = SampleEigen::from_data(&d.x).unwrap();
    let spec = LimitingSpectrum::build(&pop, AspectRatio::new(0.5).unwrap(), 256).unwrap();
    let grid: Vec<f64> = (0..25).map(|k| 0.4 + 2.0 * k as f64 / 24.0).collect();
    let est = kernel_estimate_fg(&eig.lambda, 0.5, None, Some(&grid)).unwrap();
    for (k, &x) in grid.iter().enumerate() {
        let m = companion_boundary(&spec, x).unwrap();
        let (f, g) = (est.f_hat[k], est.g_hat[k]);
        assert!((f - m.re).abs() < 0.05 * m.norm(), "f at {x}: {f} vs {}", m.re);
        assert!((g - m.im).abs() < 0.05 * m.norm(), "g at {x}: {g} vs {}", m.im);
        // For Σ = I the eigenvector overlap u'Σu = 1 = 1/(x|m̲|²).
        assert!((x * (f * f + g * g) - 1.0).abs() < 0.1, "x|m|² at {x}");
    }
}

#[test]
fn frobenius_optimal_shrinker_attains_its_limit() {
    let (p, n) = (300, 600);
    let h = two_atoms();
    let sigma = SigmaSpec::Atoms { population: h.clone() };
    let cfg = config(p, n, 0.0, sigma.clone(), 8, 31);
    let cov = Covariance::build(&sigma, p).unwrap();
    let spec = LimitingSpectrum::build(&h, cfg.gamma().unwrap(), 512).unwrap();
    let lp = lp_covariance_shrinker(&spec);
    // The optimum satisfies ∫h² dF = M(h), so its limiting loss is ∫t² dH - M(h).
    let limit = 8.5 - m_functional(&spec, &lp).unwrap().value;
    let shrinkers = [
        lp.evaluator(&spec).unwrap(),
        ShrinkageFunction::from(Family::Identity).evaluator(&spec).unwrap(),
        ShrinkageFunction::constant(2.5).evaluator(&spec).unwrap(),
    ];
    let mut losses = vec![Vec::new(); shrinkers.len()];
    for r in 0..cfg.replicates {
        let d = generate_regression_draw(&cfg, &cov, r).unwrap();
        let eig = SampleEigen::from_data(&d.x).unwrap();
        for (k, s) in shrinkers.iter().enumerate() {
            losses[k].push(empirical_frobenius_loss(&eig, s, &cov).unwrap());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (opt, ident, scalar) = (mean(&losses[0]), mean(&losses[1]), mean(&losses[2]));
    assert!((opt - limit).abs() < 0.02 * limit, "{opt} vs {limit}");
    assert!(opt < ident && opt < scalar, "{opt} {ident} {scalar}");
    // A scalar matrix at the mean eigenvalue loses the variance of H.
    assert!((scalar - 2.25).abs() < 1e-9);
}

#[test]
fn gradient_flow_risk_matches_prediction() {
    let (p, n) = (200, 400);
    let h = two_atoms();
    let sigma = SigmaSpec::Atoms { population: h.clone() };
    let cfg = config(p, n, 1.5, sigma.clone(), 24, 8);
    let cov = Covariance::build(&sigma, p).unwrap();
    let gamma = cfg.gamma().unwrap();
    let spec = LimitingSpectrum::build(&h, gamma, 512).unwrap();
    let params = RegressionModelParams::new(1.5, gamma, h).unwrap();
    let times = [0.3, 1.0, 5.0];
    let flows: Vec<ShrinkageFunction> = times.iter().map(|&t| ShrinkageFunction::gradient_flow(t, 0.0)).collect();
    let evals: Vec<_> = flows.iter().map(|f| f.evaluator(&spec).unwrap()).collect();
    let curve = run_regression_curve(&cfg, &cov, &times, &evals).unwrap();
    for (k, f) in flows.iter().enumerate() {
        let predicted = predicted_test_risk(&params, &spec, f).unwrap().test_risk;
        let s = curve.test_summary(k);
        assert!(within(predicted, &s, 3.0), "t = {}: {s:?} vs {predicted}", times[k]);
    }
}

#[test]
fn lda_errors_match_theta_and_vanish_at_high_signal() {
    let (p, n) = (200, 400);
    let h = two_atoms();
    let sigma = SigmaSpec::Atoms { population: h.clone() };
    let cfg = config(p, n, 1.0, sigma.clone(), 24, 19);
    let cov = Covariance::build(&sigma, p).unwrap();
    let gamma = cfg.gamma().unwrap();
    let spec = LimitingSpectrum::build(&h, gamma, 512).unwrap();
    let ridge = ShrinkageFunction::from(Family::RidgeInverse { lambda: 0.5 });
    let ev = ridge.evaluator(&spec).unwrap();
    let alphas = [1.0, 2.0, 8.0];
    let points: Vec<_> = alphas.iter().map(|&a| (a, ev.clone())).collect();
    let out = run_lda_errors(&cfg, &cov, &points).unwrap();
    assert_eq!(out.degenerate, 0);
    for (k, &a) in alphas.iter().enumerate() {
        let params = LdaModelParams::new(a, gamma, h.clone()).unwrap();
        let predicted = theta(&params, &spec, &ridge).unwrap().error;
        let s = out.summary(k);
        assert!(within(predicted, &s, 3.0) || (s.mean - predicted).abs() < 1e-4, "α = {a}: {s:?} vs {predicted}");
    }
    assert!(out.summary(2).mean < 1e-3);
}

#[test]
fn resolvent_trace_is_real_on_conjugate_pairs() {
    let sigma = SigmaSpec::ToeplitzAr { rho: 0.3 };
    let cfg = config(60, 120, 0.0, sigma.clone(), 4, 2);
    let cov = Covariance::build(&sigma, 60).unwrap();
    let z = Complex64::new(0.5, 0.7);
    let s = trace_functional_experiment(&cfg, &cov, &[], &[(z, z.conj())]).unwrap();
    for row in &s.resolvent {
        assert!(row[0].im.abs() < 1e-12 && row[0].re > 0.0);
    }
}
