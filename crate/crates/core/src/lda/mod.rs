//! Limiting misclassification error of shrinkage LDA and the shrinkage
//! functions that minimize it.
//!
//! Two Gaussian classes with means `±δ` and covariance `Σ`; the rule is
//! `sign(xᵀ h(Σ̂) δ̂)`. Here `h` estimates a precision matrix, so larger
//! values mean less regularization.

mod qp;

use std::io::Write;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{m_atom_weight, m_from_values, m_weights, t_from_values, t_matrix, Family, ShrinkageFunction};
use crate::spectrum::{AspectRatio, LimitingSpectrum, PopulationSpectrum};
use crate::util::{golden_section_min, normal_cdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModelParams {
    pub alpha: f64,
    pub gamma: AspectRatio,
    pub population: PopulationSpectrum,
}

impl LdaModelParams {
    pub fn new(alpha: f64, gamma: AspectRatio, population: PopulationSpectrum) -> Result<Self> {
        let p = Self { alpha, gamma, population };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {} must be positive", self.alpha)));
        }
        if self.population.min_location() <= 0.0 {
            return Err(Error::Config("LDA needs population eigenvalues bounded away from 0".into()));
        }
        Ok(())
    }

    /// Signal-to-noise ratio `s = α²/γ`.
    pub fn snr(&self) -> f64 {
        self.alpha * self.alpha / self.gamma.value()
    }

    fn check(&self, spec: &LimitingSpectrum) -> Result<()> {
        self.validate()?;
        if !spec.matches(self.gamma, &self.population) {
            return Err(Error::Config("limiting spectrum was built for a different (γ, H)".into()));
        }
        Ok(())
    }

    /// Same model with another signal strength.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.gamma, self.population.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdaErrorReport {
    pub theta: f64,
    /// `Φ(-√θ)`.
    pub error: f64,
    /// `α⁴ (∫h dF)²`.
    pub numerator: f64,
    /// `α² M(h²)`.
    pub denom_m: f64,
    /// `γ T(h)`.
    pub denom_t: f64,
    /// Set when `∫h dF = 0`, in which case the rule is a coin flip.
    pub degenerate: bool,
}

const NEGATIVITY_TOL: f64 = 1e-12;

fn integral_f(spec: &LimitingSpectrum, values: &[f64], h0: f64) -> f64 {
    let bulk: f64 = (0..spec.len()).map(|j| values[j] * spec.density_vals()[j] * spec.weights()[j]).sum();
    bulk + spec.atom0_mass() * h0
}

/// Limiting LDA error `Φ(-√Θ)` with `Θ = α⁴(∫h dF)² / (α² M(h²) + γ T(h))`.
pub fn theta(params: &LdaModelParams, spec: &LimitingSpectrum, h: &ShrinkageFunction) -> Result<LdaErrorReport> {
    params.check(spec)?;
    let (values, h0) = h.tabulate(spec)?;
    theta_from_values(params, spec, &values, h0)
}

fn theta_from_values(params: &LdaModelParams, spec: &LimitingSpectrum, values: &[f64], h0: f64) -> Result<LdaErrorReport> {
    let scale = values.iter().chain(std::iter::once(&h0)).fold(0.0f64, |m, v| m.max(v.abs()));
    let has_atom = spec.atom0_mass() > 0.0;
    if values.iter().any(|&v| v < -NEGATIVITY_TOL * scale) || (has_atom && h0 < -NEGATIVITY_TOL * scale) {
        return Err(Error::Domain("LDA shrinkage must be nonnegative".into()));
    }
    let a2 = params.alpha * params.alpha;
    let mean = integral_f(spec, values, h0);
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let denom_m = a2 * m_from_values(spec, &sq, h0 * h0).value;
    let denom_t = params.gamma.value() * t_from_values(spec, values, h0).value;
    let numerator = a2 * a2 * mean * mean;
    if mean == 0.0 || denom_m + denom_t <= 0.0 {
        return Ok(LdaErrorReport { theta: 0.0, error: 0.5, numerator, denom_m, denom_t, degenerate: true });
    }
    let theta = numerator / (denom_m + denom_t);
    Ok(LdaErrorReport { theta, error: normal_cdf(-theta.sqrt()), numerator, denom_m, denom_t, degenerate: false })
}

/// Affine fit `h ≈ a·x|m̲|² + b` of a relaxed optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationFit {
    /// Coefficient of `x|m̲(x)|²`, normalized to 1.
    pub a: f64,
    /// Shift, so that `h ∝ x|m̲|² - b`.
    pub b: f64,
    /// `L²(F)` distance between the numerically solved relaxed optimum and
    /// its best affine fit, both normalized to `∫h dF = 1`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    /// Grid function, normalized so that `∫h dF = 1`.
    pub h_opt: ShrinkageFunction,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Number of grid points at which `h ≥ 0` binds.
    pub active_bounds: usize,
    /// Set when negative eigenvalues of the discretized `T` form were floored.
    pub regularized: bool,
    pub relaxation_fit: Option<RelaxationFit>,
}

impl QpSolution {
    /// CSV with columns `x,h_opt`; the value at zero is written as `x = 0`
    /// when the spectrum has an atom there.
    pub fn write_csv<W: Write>(&self, spec: &LimitingSpectrum, mut out: W) -> Result<()> {
        let ShrinkageFunction::Grid { grid, at_zero } = &self.h_opt else {
            return Err(Error::Evaluation("QP solution is not a grid function".into()));
        };
        writeln!(out, "x,h_opt")?;
        if spec.atom0_mass() > 0.0 {
            writeln!(out, "0,{at_zero}")?;
        }
        for (x, h) in spec.grid().iter().zip(grid) {
            writeln!(out, "{x},{h}")?;
        }
        Ok(())
    }
}

/// Coordinates: grid values, then `h(0)` when `γ > 1`.
fn dimension(spec: &LimitingSpectrum) -> usize {
    spec.len() + usize::from(spec.atom0_mass() > 0.0)
}

fn constraint_vector(spec: &LimitingSpectrum) -> Vec<f64> {
    let mut a: Vec<f64> = (0..spec.len()).map(|j| spec.density_vals()[j] * spec.weights()[j]).collect();
    if spec.atom0_mass() > 0.0 {
        a.push(spec.atom0_mass());
    }
    a
}

fn m_diagonal(spec: &LimitingSpectrum) -> Vec<f64> {
    let mut d = m_weights(spec, false);
    if spec.atom0_mass() > 0.0 {
        d.push(m_atom_weight(spec));
    }
    d
}

/// Discretized `T` form, symmetrized, with negative eigenvalues set to zero.
fn t_form_psd(spec: &LimitingSpectrum) -> Result<(Mat<f64>, bool)> {
    let d = dimension(spec);
    let raw = t_matrix(spec);
    let t = Mat::from_fn(d, d, |i, j| 0.5 * (raw[i * d + j] + raw[j * d + i]));
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition of T failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let floored = (0..d).any(|i| s[i] < 0.0);
    if !floored {
        return Ok((t, false));
    }
    let u = eig.U();
    let lam: Vec<f64> = (0..d).map(|i| s[i].max(0.0)).collect();
    let mut out = Mat::<f64>::zeros(d, d);
    for k in 0..d {
        if lam[k] == 0.0 {
            continue;
        }
        for i in 0..d {
            let uik = u[(i, k)] * lam[k];
            for j in 0..d {
                out[(i, j)] += uik * u[(j, k)];
            }
        }
    }
    Ok((out, true))
}

fn split(values: Vec<f64>, spec: &LimitingSpectrum) -> (Vec<f64>, f64) {
    let mut v = values;
    let h0 = if spec.atom0_mass() > 0.0 { v.pop().unwrap_or(0.0) } else { 0.0 };
    (v, h0)
}

/// Minimizes `s M(h²) + T(h)` over `h ≥ 0` with `∫h dF = 1`, the value of `h`
/// being free at each grid node (and at zero when `γ > 1`).
///
/// Maximizing `Θ` is equivalent since `Θ = (α⁴/γ) / (s M(h²) + T(h))` on the
/// constraint set.
pub fn optimal_shrinkage_qp(params: &LdaModelParams, spec: &LimitingSpectrum) -> Result<QpSolution> {
    params.check(spec)?;
    faer::set_global_parallelism(faer::Par::Seq);
    let s = params.snr();
    let (mut q, regularized) = t_form_psd(spec)?;
    for (i, m) in m_diagonal(spec).into_iter().enumerate() {
        q[(i, i)] += s * m;
    }
    let a = constraint_vector(spec);
    let out = qp::solve(&q, &a)?;
    log::debug!("QP solved in {} active-set steps, multiplier {:.6e}", out.iterations, out.nu);
    let (grid, at_zero) = split(out.h, spec);
    let sq: Vec<f64> = grid.iter().map(|v| v * v).collect();
    let objective = s * m_from_values(spec, &sq, at_zero * at_zero).value + t_from_values(spec, &grid, at_zero).value;
    Ok(QpSolution {
        h_opt: ShrinkageFunction::Grid { grid, at_zero },
        objective,
        kkt_residual: out.kkt_residual,
        active_bounds: out.active_bounds,
        regularized,
        relaxation_fit: None,
    })
}

/// `q(x) = x |m̲(x)|²` on the grid and its value `(γ-1) m̲(0)` at zero.
///
/// This is the reciprocal of the Frobenius-optimal covariance shrinker, i.e.
/// that shrinker used as a precision estimate.
pub fn covariance_shrinker_inverse(spec: &LimitingSpectrum) -> ShrinkageFunction {
    let grid = (0..spec.len()).map(|j| spec.grid()[j] * spec.modulus_sq(j)).collect();
    let at_zero = spec.m0().map_or(0.0, |m0| (spec.gamma().value() - 1.0) * m0);
    ShrinkageFunction::Grid { grid, at_zero }
}

/// Objective `M(h²) + (γ/α²) M(h)²` of the relaxed program.
pub fn relaxed_objective(params: &LdaModelParams, spec: &LimitingSpectrum, h: &ShrinkageFunction) -> Result<f64> {
    params.check(spec)?;
    let (v, v0) = h.tabulate(spec)?;
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let m2 = m_from_values(spec, &sq, v0 * v0).value;
    let m1 = m_from_values(spec, &v, v0).value;
    Ok(m2 + m1 * m1 / params.snr())
}

/// Optimum of the relaxation `min M(h²) + (γ/α²) M(h)²` s.t. `∫h dF = 1`,
/// `h ≥ 0`, for `γ < 1`.
///
/// The program is solved on the grid and, separately, in closed form over
/// `h = a·q + b` with `q = x|m̲|²`. The returned `h_opt` is the grid solution;
/// `relaxation_fit` gives the closed-form coefficients rescaled to `a = 1`
/// and the `L²(F)` distance between the two.
pub fn relaxed_optimum(params: &LdaModelParams, spec: &LimitingSpectrum) -> Result<QpSolution> {
    params.check(spec)?;
    if spec.gamma().value() > 1.0 {
        return Err(Error::Domain("the relaxation is only analysed for γ < 1".into()));
    }
    faer::set_global_parallelism(faer::Par::Seq);
    let n = spec.len();
    let mu = m_weights(spec, false);
    let inv_s = 1.0 / params.snr();
    let q = Mat::from_fn(n, n, |i, j| inv_s * mu[i] * mu[j] + if i == j { mu[i] } else { 0.0 });
    let a = constraint_vector(spec);
    let out = qp::solve(&q, &a)?;
    log::debug!("QP solved in {} active-set steps, multiplier {:.6e}", out.iterations, out.nu);
    let h = out.h;

    // Closed form on span{q, 1}: minimize cᵀGc subject to dᵀc = 1.
    let ShrinkageFunction::Grid { grid: qv, .. } = covariance_shrinker_inverse(spec) else { unreachable!() };
    let basis = [qv.clone(), vec![1.0; n]];
    let mb: Vec<f64> = basis.iter().map(|b| dot(&mu, b)).collect();
    let mut g = [[0.0; 2]; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        for (l, gkl) in gk.iter_mut().enumerate() {
            let m2: f64 = (0..n).map(|j| mu[j] * basis[k][j] * basis[l][j]).sum();
            *gkl = m2 + inv_s * mb[k] * mb[l];
        }
    }
    let d = [dot(&a, &basis[0]), dot(&a, &basis[1])];
    // c ∝ G⁻¹d; when q is constant the family collapses to one dimension.
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let y = if det.abs() <= 1e-10 * g[0][0] * g[1][1] {
        [1.0 / d[0], 0.0]
    } else {
        [(g[1][1] * d[0] - g[0][1] * d[1]) / det, (g[0][0] * d[1] - g[1][0] * d[0]) / det]
    };
    let norm = d[0] * y[0] + d[1] * y[1];
    let c = [y[0] / norm, y[1] / norm];
    let affine: Vec<f64> = (0..n).map(|j| c[0] * qv[j] + c[1]).collect();

    let fdens: Vec<f64> = (0..n).map(|j| spec.density_vals()[j] * spec.weights()[j]).collect();
    let residual = (0..n).map(|j| fdens[j] * (h[j] - affine[j]).powi(2)).sum::<f64>().sqrt();

    let sq: Vec<f64> = h.iter().map(|v| v * v).collect();
    let m2 = m_from_values(spec, &sq, 0.0).value;
    let m1 = m_from_values(spec, &h, 0.0).value;
    Ok(QpSolution {
        h_opt: ShrinkageFunction::Grid { grid: h, at_zero: 0.0 },
        objective: m2 + inv_s * m1 * m1,
        kkt_residual: out.kkt_residual,
        active_bounds: out.active_bounds,
        regularized: false,
        relaxation_fit: Some(RelaxationFit { a: 1.0, b: -c[1] / c[0], residual }),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Shrinker `r(x) = s / (s + 1/(x|m̲|²))` minimizing the limiting loss of
/// `r(Σ̂) δ̂` as an estimate of `δ`.
pub fn mean_shrinker(params: &LdaModelParams, spec: &LimitingSpectrum) -> Result<ShrinkageFunction> {
    params.check(spec)?;
    let (grid, at_zero) =
        ShrinkageFunction::Family(Family::MeanShrinker { alpha: params.alpha, gamma: None }).tabulate(spec)?;
    Ok(ShrinkageFunction::Grid { grid, at_zero })
}

/// Limiting `‖r(Σ̂) δ̂ - δ‖² = γ M(r²) + α² ∫(r-1)² dF`.
pub fn mean_estimation_loss(params: &LdaModelParams, spec: &LimitingSpectrum, r: &ShrinkageFunction) -> Result<f64> {
    params.check(spec)?;
    let (v, v0) = r.tabulate(spec)?;
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let dev: Vec<f64> = v.iter().map(|x| (x - 1.0).powi(2)).collect();
    let a2 = params.alpha * params.alpha;
    Ok(params.gamma.value() * m_from_values(spec, &sq, v0 * v0).value + a2 * integral_f(spec, &dev, (v0 - 1.0).powi(2)))
}

/// Plug-in estimate `‖δ̂‖² - tr(Σ̂)/n` of `α²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alpha2Estimate {
    /// Estimate clamped at 0.
    pub value: f64,
    /// Unclamped difference; unbiased, so use it when averaging draws.
    pub raw: f64,
    pub clamped: bool,
}

pub fn estimate_alpha2(delta_hat_norm2: f64, trace_sample_cov: f64, n: usize) -> Result<Alpha2Estimate> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let raw = delta_hat_norm2 - trace_sample_cov / n as f64;
    Ok(Alpha2Estimate { value: raw.max(0.0), raw, clamped: raw < 0.0 })
}

/// Best `λ` for `1/(x+λ)` by golden-section search over `log λ`.
pub fn best_ridge(params: &LdaModelParams, spec: &LimitingSpectrum, lambda_lo: f64, lambda_hi: f64) -> Result<(f64, LdaErrorReport)> {
    params.check(spec)?;
    let eval = |l: f64| theta(params, spec, &Family::RidgeInverse { lambda: l }.into());
    let (u, _) = golden_section_min(|u| eval(u.exp()).map_or(f64::INFINITY, |r| r.error), lambda_lo.ln(), lambda_hi.ln(), 1e-6);
    let mut best = (u.exp(), eval(u.exp())?);
    for l in [lambda_lo, lambda_hi] {
        let r = eval(l)?;
        if r.error < best.1.error {
            best = (l, r);
        }
    }
    Ok(best)
}

/// Row of a shrinker comparison at one signal strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub alpha: f64,
    pub error_optimal: f64,
    pub error_lp_cov: f64,
    pub error_lp_prec: f64,
    pub error_ridge_best: f64,
    pub ridge_lambda: f64,
    pub error_identity: f64,
}

/// Limiting errors of the QP optimum, the two Frobenius-optimal shrinkers
/// (covariance shrinker inverted), the best ridge `1/(x+λ)` and the
/// unregularized `1/x`, across signal strengths.
pub fn compare_shrinkers(params: &LdaModelParams, spec: &LimitingSpectrum, alphas: &[f64]) -> Result<Vec<ComparisonRow>> {
    params.check(spec)?;
    let lp_cov = covariance_shrinker_inverse(spec);
    let lp_prec = crate::functionals::lp_precision_shrinker(spec)?;
    let scale = spec.support().last().map_or(1.0, |iv| iv.hi);
    alphas
        .iter()
        .map(|&alpha| {
            let p = params.with_alpha(alpha)?;
            let qp = optimal_shrinkage_qp(&p, spec)?;
            let (lambda, ridge) = best_ridge(&p, spec, 1e-6 * scale, 1e3 * scale)?;
            Ok(ComparisonRow {
                alpha,
                error_optimal: theta(&p, spec, &qp.h_opt)?.error,
                error_lp_cov: theta(&p, spec, &lp_cov)?.error,
                error_lp_prec: theta(&p, spec, &lp_prec)?.error,
                error_ridge_best: ridge.error,
                ridge_lambda: lambda,
                error_identity: theta(&p, spec, &Family::RidgeInverse { lambda: 0.0 }.into())?.error,
            })
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut out: W) -> Result<()> {
    writeln!(out, "alpha,error_optimal,error_lp_cov,error_lp_prec,error_ridge_best,error_identity")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.alpha, r.error_optimal, r.error_lp_cov, r.error_lp_prec, r.error_ridge_best, r.error_identity
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(h: &[f64], gamma: f64, alpha: f64, n: usize) -> (LdaModelParams, LimitingSpectrum) {
        let pop = PopulationSpectrum::uniform(h).unwrap();
        let g = AspectRatio::new(gamma).unwrap();
        let spec = LimitingSpectrum::build(&pop, g, n).unwrap();
        (LdaModelParams::new(alpha, g, pop).unwrap(), spec)
    }

    #[test]
    fn theta_scale_invariance_and_limits() {
        let (p, s) = setup(&[1.0, 4.0], 0.5, 2.0, 256);
        let h: ShrinkageFunction = Family::RidgeInverse { lambda: 1.0 }.into();
        let r = theta(&p, &s, &h).unwrap();
        let scaled = ShrinkageFunction::Grid { grid: h.tabulate(&s).unwrap().0.iter().map(|v| 7.3 * v).collect(), at_zero: 0.0 };
        let r2 = theta(&p, &s, &scaled).unwrap();
        assert!((r.theta - r2.theta).abs() < 1e-12 * r.theta);
        assert!((r.theta - r.numerator / (r.denom_m + r.denom_t)).abs() < 1e-12 * r.theta);
        let weak = theta(&p.with_alpha(1e-4).unwrap(), &s, &h).unwrap();
        assert!((weak.error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn negative_and_degenerate() {
        let (p, s) = setup(&[1.0, 4.0], 0.5, 2.0, 128);
        assert!(matches!(theta(&p, &s, &ShrinkageFunction::constant(-1.0)), Err(Error::Domain(_))));
        let r = theta(&p, &s, &ShrinkageFunction::constant(0.0)).unwrap();
        assert!(r.degenerate && r.error == 0.5);
    }

    #[test]
    fn identity_population_everything_is_constant() {
        let (p, s) = setup(&[1.0], 0.5, 1.0, 192);
        let rel = relaxed_optimum(&p, &s).unwrap();
        let ShrinkageFunction::Grid { grid, .. } = &rel.h_opt else { panic!() };
        assert!(grid.iter().all(|v| (v - 1.0).abs() < 1e-6));
        let ShrinkageFunction::Grid { grid, .. } = mean_shrinker(&p, &s).unwrap() else { panic!() };
        assert!(grid.iter().all(|v| (v - 2.0 / 3.0).abs() < 1e-6));
    }

    #[test]
    fn qp_beats_ridge_family_and_satisfies_constraint() {
        let (p, s) = setup(&[1.0, 4.0], 0.5, 1.5, 192);
        let sol = optimal_shrinkage_qp(&p, &s).unwrap();
        assert!(sol.kkt_residual < 1e-6, "{}", sol.kkt_residual);
        let (v, v0) = sol.h_opt.tabulate(&s).unwrap();
        assert!((integral_f(&s, &v, v0) - 1.0).abs() < 1e-8);
        assert!(v.iter().all(|&x| x >= 0.0));
        let best = theta(&p, &s, &sol.h_opt).unwrap().theta;
        for l in crate::util::log_space(1e-3, 1e2, 25) {
            let r = theta(&p, &s, &Family::RidgeInverse { lambda: l }.into()).unwrap();
            assert!(r.theta <= best * (1.0 + 1e-10));
        }
    }

    #[test]
    fn qp_with_atom_at_zero() {
        let (p, s) = setup(&[1.0, 4.0], 2.0, 1.5, 128);
        let sol = optimal_shrinkage_qp(&p, &s).unwrap();
        assert!(sol.kkt_residual < 1e-6);
        let best = theta(&p, &s, &sol.h_opt).unwrap().theta;
        let ridge = theta(&p, &s, &Family::RidgeInverse { lambda: 1.0 }.into()).unwrap().theta;
        assert!(ridge <= best * (1.0 + 1e-10));
    }

    #[test]
    fn mean_loss_optimal_over_constants() {
        let (p, s) = setup(&[1.0, 4.0], 0.5, 1.0, 192);
        let r = mean_shrinker(&p, &s).unwrap();
        let best = mean_estimation_loss(&p, &s, &r).unwrap();
        for k in 0..=20 {
            let c = k as f64 / 10.0;
            assert!(mean_estimation_loss(&p, &s, &ShrinkageFunction::constant(c)).unwrap() >= best - 1e-12);
        }
    }

    #[test]
    fn alpha2_arithmetic() {
        let e = estimate_alpha2(2.6, 1.25 * 100.0, 100).unwrap();
        assert!((e.value - 1.35).abs() < 1e-12 && !e.clamped);
        let neg = estimate_alpha2(0.1, 50.0, 100).unwrap();
        assert!(neg.clamped && neg.value == 0.0 && (neg.raw + 0.4).abs() < 1e-12);
    }
}
