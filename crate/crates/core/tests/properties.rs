use proptest::prelude::*;

use shrinkage_core::functionals::{m_functional, t_functional, Family, ShrinkageFunction};
use shrinkage_core::lda::{optimal_shrinkage_qp, theta, LdaModelParams};
use shrinkage_core::montecarlo::{generate_lda_draw, generate_regression_draw, Covariance, ExperimentConfig, SigmaSpec, ZDist};
use shrinkage_core::regression::{learning_curve, predicted_test_risk, RegressionModelParams};
use shrinkage_core::spectrum::Atom;
use shrinkage_core::{AspectRatio, LimitingSpectrum, PopulationSpectrum};

const GRID: usize = 512;

/// One to three atoms in `[0.3, 10]` with positive weights.
fn population() -> impl Strategy<Value = PopulationSpectrum> {
    prop::collection::vec((0.3f64..10.0, 0.1f64..1.0), 1..=3).prop_filter_map("distinct atoms", |raw| {
        let total: f64 = raw.iter().map(|a| a.1).sum();
        let mut atoms: Vec<Atom> = raw.iter().map(|&(t, w)| Atom { t, w: w / total }).collect();
        atoms.sort_by(|a, b| a.t.total_cmp(&b.t));
        if atoms.windows(2).any(|w| w[1].t - w[0].t < 0.05) {
            return None;
        }
        PopulationSpectrum::new(atoms).ok()
    })
}

/// Aspect ratios on both sides of 1, away from the hard edge at `γ = 1`.
fn gamma() -> impl Strategy<Value = f64> {
    prop_oneof![0.15f64..0.85, 1.2f64..3.0]
}

fn design() -> impl Strategy<Value = (PopulationSpectrum, f64, LimitingSpectrum)> {
    (population(), gamma()).prop_map(|(h, g)| {
        let spec = LimitingSpectrum::build(&h, AspectRatio::new(g).unwrap(), GRID).unwrap_or_else(|e| panic!("{h:?} γ={g}: {e}"));
        (h, g, spec)
    })
}

fn poly(coeffs: &[f64]) -> ShrinkageFunction {
    Family::Polynomial { coeffs: coeffs.to_vec() }.into()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..=3)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn spectrum_is_normalized_with_population_mean((h, _g, spec) in design()) {
        prop_assert!((spec.total_mass() - 1.0).abs() < 1e-4, "mass {}", spec.total_mass());
        prop_assert!(close(spec.first_moment(), h.mean(), 1e-4), "{} vs {}", spec.first_moment(), h.mean());
        prop_assert!(spec.density_vals().iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn m_is_linear((_h, _g, spec) in design(), c1 in coeffs(), c2 in coeffs(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let n = c1.len().max(c2.len());
        let combo: Vec<f64> = (0..n)
            .map(|k| a * c1.get(k).copied().unwrap_or(0.0) + b * c2.get(k).copied().unwrap_or(0.0))
            .collect();
        let lhs = m_functional(&spec, &poly(&combo)).unwrap().value;
        let rhs = a * m_functional(&spec, &poly(&c1)).unwrap().value + b * m_functional(&spec, &poly(&c2)).unwrap().value;
        let scale = 1.0 + lhs.abs() + rhs.abs();
        prop_assert!((lhs - rhs).abs() < 1e-10 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn t_is_quadratic_and_bounded_below((_h, _g, spec) in design(), c in coeffs(), s in 0.01f64..50.0) {
        let t = t_functional(&spec, &poly(&c)).unwrap().value;
        let scaled: Vec<f64> = c.iter().map(|v| s * v).collect();
        let ts = t_functional(&spec, &poly(&scaled)).unwrap().value;
        prop_assert!(close(ts, s * s * t, 1e-10), "{ts} vs {}", s * s * t);
        let m = m_functional(&spec, &poly(&c)).unwrap().value;
        prop_assert!(t - m * m >= -1e-9 * (1.0 + t.abs()), "T = {t} < M² = {}", m * m);
    }

    #[test]
    fn lda_theta_is_scale_invariant(
        (h, g, spec) in design(),
        alpha in 0.3f64..4.0,
        lambda in 0.01f64..5.0,
        s in 1e-3f64..1e3,
    ) {
        let params = LdaModelParams::new(alpha, AspectRatio::new(g).unwrap(), h).unwrap();
        let base = theta(&params, &spec, &Family::RidgeInverse { lambda }.into()).unwrap();
        prop_assert!(theta(&params, &spec, &ShrinkageFunction::constant(0.0)).unwrap().degenerate);
        let (v, v0) = ShrinkageFunction::from(Family::RidgeInverse { lambda }).tabulate(&spec).unwrap();
        let grid = ShrinkageFunction::Grid { grid: v.iter().map(|x| s * x).collect(), at_zero: s * v0 };
        let th = theta(&params, &spec, &grid).unwrap();
        prop_assert!(close(th.theta, base.theta, 1e-12), "{} vs {}", th.theta, base.theta);
        prop_assert!(base.error > 0.0 && base.error < 0.5);
    }

    #[test]
    fn optimal_shrinkage_beats_ridge((h, g, spec) in design(), alpha in 0.5f64..3.0) {
        let params = LdaModelParams::new(alpha, AspectRatio::new(g).unwrap(), h).unwrap();
        let sol = optimal_shrinkage_qp(&params, &spec).unwrap();
        let best = theta(&params, &spec, &sol.h_opt).unwrap().theta;
        for lambda in [0.01, 0.1, 1.0, 10.0] {
            let r = theta(&params, &spec, &Family::RidgeInverse { lambda }.into()).unwrap().theta;
            prop_assert!(best >= r * (1.0 - 1e-9), "optimum {best} below ridge({lambda}) {r}");
        }
    }

    #[test]
    fn null_estimator_risk_is_closed_form((h, g, spec) in design(), alpha in 0.0f64..3.0) {
        let params = RegressionModelParams::new(alpha, AspectRatio::new(g).unwrap(), h.clone()).unwrap();
        let risk = predicted_test_risk(&params, &spec, &ShrinkageFunction::constant(0.0)).unwrap().test_risk;
        let expect = 1.0 + alpha * alpha * h.mean();
        prop_assert!(close(risk, expect, 1e-4), "{risk} vs {expect}");
    }

    #[test]
    fn training_error_decreases_in_time((h, g, spec) in design(), alpha in 0.2f64..3.0, lambda in 0.0f64..2.0) {
        let params = RegressionModelParams::new(alpha, AspectRatio::new(g).unwrap(), h).unwrap();
        let times: Vec<f64> = (0..40).map(|k| 1e-3 * 10f64.powf(k as f64 * 0.15)).collect();
        let curve = learning_curve(&params, &spec, lambda, &times).unwrap();
        for w in curve.train_error.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn draws_are_deterministic(seed in any::<u64>(), rho in 0.0f64..0.8, replicate in 0usize..5) {
        let sigma = SigmaSpec::ToeplitzAr { rho };
        let config = ExperimentConfig {
            p: 12,
            n: 20,
            alpha: 1.0,
            sigma: sigma.clone(),
            z_dist: ZDist::Gaussian,
            seed,
            replicates: 5,
        };
        let cov = Covariance::build(&sigma, 12).unwrap();
        let a = generate_regression_draw(&config, &cov, replicate).unwrap();
        let b = generate_regression_draw(&config, &cov, replicate).unwrap();
        prop_assert_eq!(&a.x, &b.x);
        prop_assert_eq!(&a.y, &b.y);
        let other = generate_regression_draw(&config, &cov, (replicate + 1) % 5).unwrap();
        prop_assert_ne!(&a.y, &other.y);
        let la = generate_lda_draw(&config, &cov, replicate).unwrap();
        let lb = generate_lda_draw(&config, &cov, replicate).unwrap();
        prop_assert_eq!(&la.x, &lb.x);
        prop_assert_eq!(&la.labels, &lb.labels);
    }
}
