//! Out-of-sample risk and training error of singular-value shrinkage
//! regression, `ŵ = Σ h(λ_i) u_i v_iᵀ y / √n`, under a random dense signal
//! with `Var(w_i) = α²/p` and unit noise variance.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{m_atom_weight, m_weights, Family, ShrinkageFunction};
use crate::spectrum::{AspectRatio, LimitingSpectrum, PopulationSpectrum};
use crate::util::golden_section_min;

/// Tolerance used when checking a risk curve for monotonicity.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModelParams {
    pub alpha: f64,
    pub gamma: AspectRatio,
    pub population: PopulationSpectrum,
}

impl RegressionModelParams {
    pub fn new(alpha: f64, gamma: AspectRatio, population: PopulationSpectrum) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {alpha} must be finite and >= 0")));
        }
        Ok(Self { alpha, gamma, population })
    }

    /// Ridge penalty `γ/α²` that minimizes the limiting risk.
    pub fn optimal_ridge(&self) -> f64 {
        self.gamma.value() / (self.alpha * self.alpha)
    }

    fn check(&self, spec: &LimitingSpectrum) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {} must be finite and >= 0", self.alpha)));
        }
        if !spec.matches(self.gamma, &self.population) {
            return Err(Error::Config("limiting spectrum was built for a different (γ, H)".into()));
        }
        Ok(())
    }
}

/// Limiting test risk `1 + bias + variance + atom`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub test_risk: f64,
    /// `∫ α² (√x h - 1)² dμ` over the continuous support.
    pub bias_integral: f64,
    /// `∫ γ h² dμ` over the continuous support.
    pub variance_integral: f64,
    /// `(α² + γ h(0)²) / (γ m̲(0))` when `γ > 1`, else 0.
    pub atom_term: f64,
}

/// Limiting out-of-sample risk `E(y - xᵀŵ)²` of the shrinkage estimator.
pub fn predicted_test_risk(
    params: &RegressionModelParams,
    spec: &LimitingSpectrum,
    h: &ShrinkageFunction,
) -> Result<RiskReport> {
    params.check(spec)?;
    let (values, h0) = h.tabulate(spec)?;
    Ok(risk_from_values(params.alpha, spec, &m_weights(spec, false), &values, h0))
}

fn risk_from_values(alpha: f64, spec: &LimitingSpectrum, mu: &[f64], values: &[f64], h0: f64) -> RiskReport {
    let a2 = alpha * alpha;
    let gamma = spec.gamma().value();
    let mut bias = 0.0;
    let mut var = 0.0;
    for ((&x, &h), &w) in spec.grid().iter().zip(values).zip(mu) {
        let r = x.sqrt() * h - 1.0;
        bias += w * a2 * r * r;
        var += w * gamma * h * h;
    }
    let atom_term = (a2 + gamma * h0 * h0) * m_atom_weight(spec);
    RiskReport { test_risk: 1.0 + bias + var + atom_term, bias_integral: bias, variance_integral: var, atom_term }
}

/// Shrinkage produced by running gradient flow for time `t` on the ridge loss
/// with penalty `λ`, started at zero.
pub fn gd_shrinkage(t: f64, lambda: f64) -> ShrinkageFunction {
    Family::GradientFlow { t, lambda }.into()
}

/// `x (1 - e^{-t(x+λ)}) / (x+λ)`: fitted-value multiplier of an eigen-direction.
fn smoother(x: f64, t: f64, lambda: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    -(-t * (x + lambda)).exp_m1() * x / (x + lambda)
}

/// Limiting training error `n⁻¹ ‖y - Xᵀŵ‖²` of gradient flow at time `t`.
///
/// Integrates against `F` and its companion `F̲ = max(1-γ,0) δ₀ + γ F_cont`.
pub fn predicted_train_error(params: &RegressionModelParams, spec: &LimitingSpectrum, t: f64, lambda: f64) -> Result<f64> {
    params.check(spec)?;
    Ok(train_error(params.alpha, spec, t, lambda))
}

fn train_error(alpha: f64, spec: &LimitingSpectrum, t: f64, lambda: f64) -> f64 {
    let gamma = spec.gamma().value();
    let a2 = alpha * alpha;
    let mut bulk = 0.0;
    for j in 0..spec.len() {
        let x = spec.grid()[j];
        let d = smoother(x, t, lambda) - 1.0;
        let dens = spec.density_vals()[j] * spec.weights()[j];
        bulk += dens * d * d * (gamma + a2 * x);
    }
    // s(0) = 0, so the companion atom at zero contributes its mass.
    bulk + (1.0 - gamma).max(0.0)
}

/// Test risk and training error of gradient flow along a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningCurve {
    pub lambda: f64,
    pub times: Vec<f64>,
    pub test_risk: Vec<f64>,
    pub train_error: Vec<f64>,
}

impl LearningCurve {
    /// CSV with columns `t,test_risk,train_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,test_risk,train_error")?;
        for i in 0..self.times.len() {
            writeln!(out, "{},{},{}", self.times[i], self.test_risk[i], self.train_error[i])?;
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config("time grid is empty".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Config("times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda = {lambda} must be finite and >= 0")))
    }
}

fn gd_risk(alpha: f64, spec: &LimitingSpectrum, mu: &[f64], t: f64, lambda: f64) -> f64 {
    let family = Family::GradientFlow { t, lambda };
    let values: Vec<f64> = spec.grid().iter().map(|&x| family.eval(x).unwrap_or(f64::NAN)).collect();
    risk_from_values(alpha, spec, mu, &values, 0.0).test_risk
}

/// Predicted learning curve of gradient flow with ridge penalty `λ`.
pub fn learning_curve(
    params: &RegressionModelParams,
    spec: &LimitingSpectrum,
    lambda: f64,
    times: &[f64],
) -> Result<LearningCurve> {
    params.check(spec)?;
    check_lambda(lambda)?;
    check_times(times)?;
    let mu = m_weights(spec, false);
    let (test_risk, train): (Vec<f64>, Vec<f64>) = times
        .par_iter()
        .map(|&t| (gd_risk(params.alpha, spec, &mu, t, lambda), train_error(params.alpha, spec, t, lambda)))
        .unzip();
    Ok(LearningCurve { lambda, times: times.to_vec(), test_risk, train_error: train })
}

/// Learning curve for `Σ = I`, `λ = 0` straight from the closed-form
/// Marchenko–Pastur density, without solving for the spectrum.
pub fn closed_form_identity_curve(alpha: f64, gamma: AspectRatio, times: &[f64]) -> Result<LearningCurve> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha = {alpha} must be finite and >= 0")));
    }
    check_times(times)?;
    let g = gamma.value();
    let a = (1.0 - g.sqrt()).powi(2);
    let b = (1.0 + g.sqrt()).powi(2);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    // x = c - r cos θ turns the square-root edges into a smooth periodic integrand.
    const NODES: usize = 4000;
    let nodes: Vec<(f64, f64)> = (0..NODES)
        .map(|j| {
            let theta = PI * (j as f64 + 0.5) / NODES as f64;
            let x = c - r * theta.cos();
            let density = ((b - x) * (x - a)).max(0.0).sqrt() / (2.0 * PI * g * x);
            (x, density * r * theta.sin() * PI / NODES as f64)
        })
        .collect();
    let atom = (1.0 - 1.0 / g).max(0.0);
    let a2 = alpha * alpha;
    let mut test_risk = Vec::with_capacity(times.len());
    let mut train = Vec::with_capacity(times.len());
    for &t in times {
        let mut risk = 1.0 + a2 * atom;
        let mut tr = (1.0 - g).max(0.0);
        for &(x, w) in &nodes {
            let e = (-t * x).exp();
            let one_minus = -(-t * x).exp_m1();
            risk += w * (a2 * e * e + g * one_minus * one_minus / x);
            tr += w * e * e * (g + a2 * x);
        }
        test_risk.push(risk);
        train.push(tr);
    }
    Ok(LearningCurve { lambda: 0.0, times: times.to_vec(), test_risk, train_error: train })
}

/// Outcome of a monotonicity check on a test-risk curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// Largest increase `risk(t_{i+1}) - risk(t_i)` found (0 if none).
    pub max_violation: f64,
    /// Time at which that increase ends, if any.
    pub at_time: Option<f64>,
}

/// Whether the gradient-flow test risk is non-increasing along `times`.
///
/// With `strict`, `λ` must be at least `γ/α²`, where non-increase is
/// guaranteed; without it the curve is just inspected.
pub fn check_overregularized_monotone(
    params: &RegressionModelParams,
    spec: &LimitingSpectrum,
    lambda: f64,
    times: &[f64],
    strict: bool,
) -> Result<MonotoneCheck> {
    if strict && lambda < params.optimal_ridge() {
        return Err(Error::Domain(format!(
            "λ = {lambda} is below γ/α² = {}; monotonicity is only guaranteed above it",
            params.optimal_ridge()
        )));
    }
    let curve = learning_curve(params, spec, lambda, times)?;
    let mut worst = 0.0;
    let mut at = None;
    for (i, w) in curve.test_risk.windows(2).enumerate() {
        let inc = w[1] - w[0];
        if inc > worst {
            worst = inc;
            at = Some(times[i + 1]);
        }
    }
    Ok(MonotoneCheck { monotone: worst <= MONOTONE_TOL, max_violation: worst, at_time: at })
}

/// Best stopping time of gradient flow with penalty `λ` within `[t_lo, t_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingTime {
    pub lambda: f64,
    pub t_opt: f64,
    pub risk_opt: f64,
    /// Risk at `t_hi`, the "fully trained" reference.
    pub risk_final: f64,
}

/// Golden-section search over `log t`.
pub fn optimal_stopping_time(
    params: &RegressionModelParams,
    spec: &LimitingSpectrum,
    lambda: f64,
    t_lo: f64,
    t_hi: f64,
) -> Result<StoppingTime> {
    params.check(spec)?;
    check_lambda(lambda)?;
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::Config(format!("need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")));
    }
    let mu = m_weights(spec, false);
    let risk = |t: f64| gd_risk(params.alpha, spec, &mu, t, lambda);
    let (u, r) = golden_section_min(|u| risk(u.exp()), t_lo.ln(), t_hi.ln(), 1e-6);
    let (r_lo, r_hi) = (risk(t_lo), risk(t_hi));
    // Ends win when the curve is monotone on the bracket.
    let (t_opt, risk_opt) = [(u.exp(), r), (t_lo, r_lo), (t_hi, r_hi)]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates");
    Ok(StoppingTime { lambda, t_opt, risk_opt, risk_final: r_hi })
}

/// One cell of a risk surface over `(t, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub t: f64,
    pub lambda: f64,
    pub risk: f64,
}

/// Gradient-flow test risk on the grid `times × lambdas`, `t` varying fastest.
pub fn risk_surface(
    params: &RegressionModelParams,
    spec: &LimitingSpectrum,
    lambdas: &[f64],
    times: &[f64],
) -> Result<Vec<SurfacePoint>> {
    params.check(spec)?;
    check_times(times)?;
    for &l in lambdas {
        check_lambda(l)?;
    }
    let mu = m_weights(spec, false);
    let cells: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| times.iter().map(move |&t| (t, l))).collect();
    Ok(cells
        .par_iter()
        .map(|&(t, lambda)| SurfacePoint { t, lambda, risk: gd_risk(params.alpha, spec, &mu, t, lambda) })
        .collect())
}

pub fn write_surface_csv<W: Write>(points: &[SurfacePoint], mut out: W) -> Result<()> {
    writeln!(out, "t,lambda,risk")?;
    for p in points {
        writeln!(out, "{},{},{}", p.t, p.lambda, p.risk)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::log_space;

    fn setup(h: &[f64], gamma: f64, alpha: f64) -> (RegressionModelParams, LimitingSpectrum) {
        let pop = PopulationSpectrum::uniform(h).unwrap();
        let g = AspectRatio::new(gamma).unwrap();
        let spec = LimitingSpectrum::build(&pop, g, 384).unwrap();
        (RegressionModelParams::new(alpha, g, pop).unwrap(), spec)
    }

    #[test]
    fn null_estimator_risk() {
        let (p, s) = setup(&[1.0], 0.5, 0.5);
        let r = predicted_test_risk(&p, &s, &ShrinkageFunction::constant(0.0)).unwrap();
        assert!((r.test_risk - 1.25).abs() < 1e-4);
        let sum = 1.0 + r.bias_integral + r.variance_integral + r.atom_term;
        assert!((r.test_risk - sum).abs() < 1e-12);
    }

    #[test]
    fn mismatched_spectrum_is_config_error() {
        let (p, _) = setup(&[1.0], 0.5, 0.5);
        let (_, other) = setup(&[1.0], 0.25, 0.5);
        assert!(matches!(
            predicted_test_risk(&p, &other, &ShrinkageFunction::ridge(1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn optimal_ridge_beats_grid() {
        for (gamma, alpha) in [(1.0 / 3.0, 1.0), (2.0, 1.0)] {
            let (p, s) = setup(&[1.0, 4.0], gamma, alpha);
            let best = predicted_test_risk(&p, &s, &ShrinkageFunction::ridge(p.optimal_ridge())).unwrap();
            for l in log_space(1e-3, 1e2, 30) {
                let r = predicted_test_risk(&p, &s, &ShrinkageFunction::ridge(l)).unwrap();
                assert!(r.test_risk >= best.test_risk - 1e-12);
            }
        }
    }

    #[test]
    fn curve_endpoints() {
        let (p, s) = setup(&[1.0, 4.0], 1.0 / 3.0, 1.0);
        let c = learning_curve(&p, &s, 1.0 / 3.0, &[0.0, 1.0, 1e6]).unwrap();
        assert!((c.test_risk[0] - 3.5).abs() < 1e-4);
        assert!((c.train_error[0] - 3.5).abs() < 1e-4);
        let ridge = predicted_test_risk(&p, &s, &ShrinkageFunction::ridge(1.0 / 3.0)).unwrap();
        assert!((c.test_risk[2] - ridge.test_risk).abs() < 1e-6);
        assert!(c.train_error.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn unregularized_training_error_limit() {
        let (p, s) = setup(&[1.0, 4.0], 0.5, 1.0);
        let e = predicted_train_error(&p, &s, 1e6, 1e-8).unwrap();
        assert!((e - 0.5).abs() < 1e-3, "{e}");
    }

    #[test]
    fn closed_form_matches_solved_spectrum() {
        for gamma in [0.5, 2.0] {
            let (p, s) = setup(&[1.0], gamma, 0.5);
            let times = log_space(1e-2, 1e3, 12);
            let solved = learning_curve(&p, &s, 0.0, &times).unwrap();
            let closed = closed_form_identity_curve(0.5, p.gamma, &times).unwrap();
            for i in 0..times.len() {
                assert!((solved.test_risk[i] - closed.test_risk[i]).abs() < 1e-4, "γ={gamma} t={}", times[i]);
                assert!((solved.train_error[i] - closed.train_error[i]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn strict_monotone_precondition() {
        let (p, s) = setup(&[1.0], 0.5, 0.5);
        let times = log_space(1e-2, 1e3, 40);
        assert!(check_overregularized_monotone(&p, &s, 0.2, &times, true).is_err());
        assert!(check_overregularized_monotone(&p, &s, 2.0, &times, true).unwrap().monotone);
        let diag = check_overregularized_monotone(&p, &s, 0.2, &times, false).unwrap();
        assert!(!diag.monotone && diag.max_violation > 0.0);
    }

    #[test]
    fn stopping_time_is_interior_for_unregularized() {
        let (p, s) = setup(&[1.0], 0.5, 0.5);
        let st = optimal_stopping_time(&p, &s, 0.0, 1e-2, 1e3).unwrap();
        assert!(st.t_opt > 1e-2 && st.t_opt < 1e3);
        assert!(st.risk_opt < st.risk_final);
    }
}
