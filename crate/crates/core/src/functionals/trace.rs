use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::shrinkage::{Family, ShrinkageFunction};
use crate::error::{Error, Result};
use crate::spectrum::stieltjes::{boundary_value, InverseMap};
use crate::spectrum::{companion_transform, LimitingSpectrum};

/// Relative part of the accuracy target for [`FunctionalValue::flagged`].
pub const REL_ACCURACY: f64 = 1e-6;
/// Absolute part of the accuracy target.
pub const ABS_ACCURACY: f64 = 1e-9;
/// Below this separation the two-resolvent divided difference becomes `m̲'`.
pub const COINCIDENT_Z: f64 = 1e-8;

/// Value of a limiting trace functional with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalValue {
    pub value: f64,
    /// Contribution of the continuous part of the spectrum.
    pub bulk: f64,
    /// Contribution of the atom at zero (zero when `γ < 1`).
    pub atom: f64,
    /// Difference to the embedded coarse quadrature rule.
    pub error_estimate: f64,
    /// Set when `error_estimate` exceeds `1e-6 |value| + 1e-9`.
    pub flagged: bool,
}

impl FunctionalValue {
    fn new(bulk: f64, atom: f64, coarse_bulk: f64) -> Self {
        let value = bulk + atom;
        let error_estimate = (bulk - coarse_bulk).abs();
        Self {
            value,
            bulk,
            atom,
            error_estimate,
            flagged: error_estimate > REL_ACCURACY * value.abs() + ABS_ACCURACY,
        }
    }
}

/// Quadrature weights of the `M` functional: `∫ h dμ_M = Σ_j μ_j h_j + μ_0 h(0)`
/// where `dμ_M = g / (γ π x |m̲|²) dx` on the support.
pub(crate) fn m_weights(spec: &LimitingSpectrum, coarse: bool) -> Vec<f64> {
    let gamma = spec.gamma().value();
    let w = if coarse { spec.coarse_weights() } else { spec.weights() };
    (0..spec.len())
        .map(|j| w[j] * spec.g_vals()[j] / (gamma * PI * spec.grid()[j] * spec.modulus_sq(j)))
        .collect()
}

/// Mass of `μ_M` at zero: `1 / (γ m̲(0))` for `γ > 1`, else 0.
pub(crate) fn m_atom_weight(spec: &LimitingSpectrum) -> f64 {
    spec.m0().map_or(0.0, |m0| 1.0 / (spec.gamma().value() * m0))
}

/// `M(h) = lim p⁻¹ tr(Σ h(S_n))`.
pub fn m_functional(spec: &LimitingSpectrum, h: &ShrinkageFunction) -> Result<FunctionalValue> {
    let (values, h0) = h.tabulate(spec)?;
    Ok(m_from_values(spec, &values, h0))
}

pub(crate) fn m_from_values(spec: &LimitingSpectrum, values: &[f64], h0: f64) -> FunctionalValue {
    let dot = |w: Vec<f64>| w.iter().zip(values).map(|(a, b)| a * b).sum::<f64>();
    let bulk = dot(m_weights(spec, false));
    let coarse = dot(m_weights(spec, true));
    FunctionalValue::new(bulk, m_atom_weight(spec) * h0, coarse)
}

/// `K(x_i, x_j)` from boundary values and, on the diagonal, `m̲'`.
fn kernel_entry(gamma: f64, x: f64, mx: Complex64, y: f64, my: Complex64, dmx: Complex64) -> f64 {
    let (fx, gx) = (mx.re, mx.im);
    let (fy, gy) = (my.re, my.im);
    let px = fx * fx + gx * gx;
    let py = fy * fy + gy * gy;
    let first = -gx * gy / (gamma * PI * PI * x * y * px * py);
    let quotient = if x == y {
        // Removable singularity: the difference quotient tends to ∂_y.
        let dp = 2.0 * (fx * dmx.re + gx * dmx.im);
        fx * dp - dmx.re * px
    } else {
        (fx * py - fy * px) / (y - x)
    };
    first + 2.0 * quotient * gx * gy / (gamma * PI * PI * x * y * px * px * py * py)
}

/// Row-major `K(x_i, x_j)` on the grid, computed once per spectrum.
fn kernel_matrix(spec: &LimitingSpectrum) -> &[f64] {
    spec.kernel_cache.get_or_init(|| {
        let n = spec.len();
        let gamma = spec.gamma().value();
        let x = spec.grid();
        let m: Vec<Complex64> = (0..n).map(|j| Complex64::new(spec.f_vals()[j], spec.g_vals()[j])).collect();
        let dm = spec.companion_derivative();
        let mut k = vec![0.0; n * n];
        k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                *out = kernel_entry(gamma, x[i], m[i], x[j], m[j], dm[i]);
            }
        });
        k
    })
}

/// The kernel `K(x, y)` of the double integral in `T` at two points of the
/// support. Symmetric; the diagonal is its continuous extension.
pub fn kernel_k(spec: &LimitingSpectrum, x: f64, y: f64) -> Result<f64> {
    let map = InverseMap::new(spec.population(), spec.gamma());
    let (fx, gx) = spec.boundary_values(x)?;
    let (fy, gy) = spec.boundary_values(y)?;
    let mx = Complex64::new(fx, gx);
    let my = Complex64::new(fy, gy);
    let scale = spec.support().last().map_or(1.0, |iv| iv.hi);
    if (x - y).abs() <= 1e-12 * scale {
        let dm = 1.0 / map.eval(mx).1;
        return Ok(kernel_entry(spec.gamma().value(), x, mx, x, mx, dm));
    }
    // Average the two orders so the value is symmetric to rounding.
    let a = kernel_entry(spec.gamma().value(), x, mx, y, my, Complex64::new(0.0, 0.0));
    let b = kernel_entry(spec.gamma().value(), y, my, x, mx, Complex64::new(0.0, 0.0));
    Ok(0.5 * (a + b))
}

struct TParts {
    single: f64,
    double: f64,
    atom: f64,
}

/// Bilinear form behind `T`, given tabulated values of `h1` and `h2`.
fn t_parts(spec: &LimitingSpectrum, a: &[f64], a0: f64, b: &[f64], b0: f64, coarse: bool) -> TParts {
    let n = spec.len();
    let gamma = spec.gamma().value();
    let w = if coarse { spec.coarse_weights() } else { spec.weights() };
    let x = spec.grid();
    let g = spec.g_vals();
    let f = spec.f_vals();

    let single: f64 = (0..n)
        .map(|j| {
            let p = spec.modulus_sq(j);
            w[j] * a[j] * b[j] * g[j] / (gamma * PI * x[j] * x[j] * p * p)
        })
        .sum();

    let k = kernel_matrix(spec);
    let wb: Vec<f64> = (0..n).map(|j| w[j] * b[j]).collect();
    let double: f64 = (0..n)
        .filter(|&i| w[i] != 0.0)
        .map(|i| {
            let row = &k[i * n..(i + 1) * n];
            w[i] * a[i] * row.iter().zip(&wb).map(|(kij, v)| kij * v).sum::<f64>()
        })
        .sum();

    let atom = match spec.companion_at_zero() {
        None => 0.0,
        Some(z) => {
            let m0 = z.m0;
            let u_weight = |j: usize| {
                let p = spec.modulus_sq(j);
                w[j] * (p - 2.0 * f[j] * m0 - x[j] * m0 * p) * g[j] / (PI * x[j] * x[j] * p * p)
            };
            let ua: f64 = (0..n).map(|j| u_weight(j) * a[j]).sum();
            let ub: f64 = (0..n).map(|j| u_weight(j) * b[j]).sum();
            let m0sq = m0 * m0;
            (z.m0_prime / (m0sq * m0sq) - 1.0 / m0sq) * a0 * b0 / gamma + (a0 * ub + b0 * ua) / (gamma * m0sq)
        }
    };
    TParts { single, double, atom }
}

/// `T(h) = lim p⁻¹ tr(Σ h(S_n) Σ h(S_n))`.
pub fn t_functional(spec: &LimitingSpectrum, h: &ShrinkageFunction) -> Result<FunctionalValue> {
    let (v, v0) = h.tabulate(spec)?;
    Ok(t_from_values(spec, &v, v0))
}

pub(crate) fn t_from_values(spec: &LimitingSpectrum, v: &[f64], v0: f64) -> FunctionalValue {
    let fine = t_parts(spec, v, v0, v, v0, false);
    let coarse = t_parts(spec, v, v0, v, v0, true);
    FunctionalValue::new(fine.single + fine.double, fine.atom, coarse.single + coarse.double)
}

/// Symmetric bilinear form `T(h1, h2)` with `T(h, h) = T(h)`.
pub fn t_bilinear(spec: &LimitingSpectrum, h1: &ShrinkageFunction, h2: &ShrinkageFunction) -> Result<f64> {
    let (a, a0) = h1.tabulate(spec)?;
    let (b, b0) = h2.tabulate(spec)?;
    let p = t_parts(spec, &a, a0, &b, b0, false);
    Ok(p.single + p.double + p.atom)
}

/// Matrix of the quadratic form `T` in the coordinates `(h(x_1), …, h(x_N), h(0))`,
/// the last coordinate present only for `γ > 1`. Row-major, symmetric.
pub(crate) fn t_matrix(spec: &LimitingSpectrum) -> Vec<f64> {
    let n = spec.len();
    let dim = n + usize::from(spec.m0().is_some());
    let gamma = spec.gamma().value();
    let w = spec.weights();
    let k = kernel_matrix(spec);
    let mut a = vec![0.0; dim * dim];
    for i in 0..n {
        for j in 0..n {
            let kij = 0.5 * (k[i * n + j] + k[j * n + i]);
            a[i * dim + j] = w[i] * w[j] * kij;
        }
        let p = spec.modulus_sq(i);
        let x = spec.grid()[i];
        a[i * dim + i] += w[i] * spec.g_vals()[i] / (gamma * PI * x * x * p * p);
    }
    if let Some(z) = spec.companion_at_zero() {
        let m0 = z.m0;
        let m0sq = m0 * m0;
        for j in 0..n {
            let p = spec.modulus_sq(j);
            let x = spec.grid()[j];
            let u = w[j] * (p - 2.0 * spec.f_vals()[j] * m0 - x * m0 * p) * spec.g_vals()[j] / (PI * x * x * p * p);
            let c = u / (gamma * m0sq);
            a[j * dim + n] = c;
            a[n * dim + j] = c;
        }
        a[n * dim + n] = (z.m0_prime / (m0sq * m0sq) - 1.0 / m0sq) / gamma;
    }
    a
}

/// `lim p⁻¹ tr(Σ (S_n - z1)⁻¹ Σ (S_n - z2)⁻¹)` for non-real `z1`, `z2`.
pub fn two_resolvent_limit(spec: &LimitingSpectrum, z1: Complex64, z2: Complex64) -> Result<Complex64> {
    let h = spec.population();
    let gamma = spec.gamma();
    let m1 = companion_transform(h, gamma, z1)?;
    let m2 = companion_transform(h, gamma, z2)?;
    let g = gamma.value();
    let quotient = if (z1 - z2).norm() < COINCIDENT_Z {
        1.0 / InverseMap::new(h, gamma).eval(m1).1
    } else {
        (m2 - m1) / (z2 - z1)
    };
    let zz = z1 * z2;
    Ok(-1.0 / (g * zz * m1 * m2) + quotient / (g * zz * m1 * m1 * m2 * m2))
}

/// Frobenius-optimal covariance shrinker `1/(x |m̲(x)|²)` tabulated on the
/// grid, with `h(0) = 1/((γ-1) m̲(0))` when `γ > 1`.
pub fn lp_covariance_shrinker(spec: &LimitingSpectrum) -> ShrinkageFunction {
    let (grid, at_zero) = ShrinkageFunction::Family(Family::LpCovariance)
        .tabulate(spec)
        .expect("boundary values on the grid are finite");
    ShrinkageFunction::Grid { grid, at_zero }
}

/// Frobenius-optimal precision shrinker `(γ - 1 - 2 x f(x)) / x`.
///
/// For `γ > 1` the value at zero is the one that makes `∫ h dF` equal to
/// `∫ t⁻¹ dH(t)`, the limit of `p⁻¹ tr(Σ⁻¹)`.
pub fn lp_precision_shrinker(spec: &LimitingSpectrum) -> Result<ShrinkageFunction> {
    let lo = spec.support()[0].lo;
    let scale = spec.support().last().map_or(1.0, |iv| iv.hi);
    if lo <= 1e-10 * scale {
        return Err(Error::Domain(format!("support reaches 0 (lower edge {lo})")));
    }
    let (grid, at_zero) = ShrinkageFunction::Family(Family::LpPrecision).tabulate(spec)?;
    Ok(ShrinkageFunction::Grid { grid, at_zero })
}

/// Boundary value `m̲(x)` at a point of the support, exposed for oracles.
pub fn companion_boundary(spec: &LimitingSpectrum, x: f64) -> Result<Complex64> {
    spec.boundary_values(x)?;
    boundary_value(&InverseMap::new(spec.population(), spec.gamma()), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{AspectRatio, PopulationSpectrum};

    fn spec(h: &[f64], gamma: f64, n: usize) -> LimitingSpectrum {
        LimitingSpectrum::build(&PopulationSpectrum::uniform(h).unwrap(), AspectRatio::new(gamma).unwrap(), n)
            .unwrap()
    }

    /// MP moments: `∫ x dF = 1`, `∫ x² dF = 1 + γ`, `∫ x³ dF = 1 + 3γ + γ²`.
    fn mp_moment(gamma: f64, k: usize) -> f64 {
        [1.0, 1.0, 1.0 + gamma, 1.0 + 3.0 * gamma + gamma * gamma][k]
    }

    #[test]
    fn m_of_one_is_mean_of_h() {
        let s = spec(&[1.0, 4.0], 1.0 / 3.0, 512);
        let v = m_functional(&s, &ShrinkageFunction::constant(1.0)).unwrap();
        assert!((v.value - 2.5).abs() < 1e-4, "{v:?}");
        assert!(!v.flagged);
    }

    #[test]
    fn identity_population_m_is_mp_integral() {
        for gamma in [0.5, 2.0] {
            let s = spec(&[1.0], gamma, 512);
            let v = m_functional(&s, &Family::Identity.into()).unwrap();
            assert!((v.value - 1.0).abs() < 1e-4);
            let sq = m_functional(&s, &Family::Polynomial { coeffs: vec![0.0, 0.0, 1.0] }.into()).unwrap();
            assert!((sq.value - mp_moment(gamma, 2)).abs() < 1e-4);
        }
    }

    #[test]
    fn identity_population_t_collapses() {
        for gamma in [0.5, 2.0] {
            let s = spec(&[1.0], gamma, 384);
            // h = 1 + x - x²/2 + x³/4, so ∫h² dF needs moments up to 6: use quadrature of F instead.
            let coeffs = vec![1.0, 1.0, -0.5, 0.25];
            let poly = Family::Polynomial { coeffs: coeffs.clone() };
            let p = |x: f64| coeffs.iter().rev().fold(0.0, |a, c| a * x + c);
            let expected = s.integrate(|x| p(x) * p(x));
            let t = t_functional(&s, &poly.into()).unwrap();
            assert!((t.value - expected).abs() < 5e-4 * expected.max(1.0), "γ={gamma}: {} vs {expected}", t.value);
        }
        let s = spec(&[1.0], 0.5, 384);
        let t = t_functional(&s, &Family::Identity.into()).unwrap();
        assert!((t.value - 1.5).abs() < 5e-4);
    }

    #[test]
    fn kernel_vanishes_for_identity_population() {
        let s = spec(&[1.0], 0.5, 128);
        let k = kernel_matrix(&s);
        let scale = k.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(scale < 1e-8, "max |K| = {scale}");
    }

    #[test]
    fn kernel_symmetric_and_continuous() {
        let s = spec(&[1.0, 4.0], 1.0 / 3.0, 128);
        let (a, b) = (s.support()[0].lo, s.support()[0].hi);
        let x = a + 0.3 * (b - a);
        let y = a + 0.7 * (b - a);
        let kxy = kernel_k(&s, x, y).unwrap();
        let kyx = kernel_k(&s, y, x).unwrap();
        assert!((kxy - kyx).abs() <= 1e-10 * kxy.abs().max(1.0));
        let diag = kernel_k(&s, x, x).unwrap();
        let near = kernel_k(&s, x, x + 1e-4).unwrap();
        assert!((diag - near).abs() <= 1e-4 * diag.abs().max(1e-12) * 10.0, "{diag} vs {near}");
        let fd = 0.5 * (kernel_k(&s, x, x + 1e-5).unwrap() + kernel_k(&s, x, x - 1e-5).unwrap());
        assert!((diag - fd).abs() <= 1e-6 * diag.abs(), "{diag} vs {fd}");
    }

    #[test]
    fn bilinear_polarization_and_zero() {
        let s = spec(&[1.0, 4.0], 2.0, 192);
        let h1: ShrinkageFunction = Family::RidgeInverse { lambda: 0.5 }.into();
        let h2: ShrinkageFunction = Family::Exponential { rate: 0.3 }.into();
        let (a, a0) = h1.tabulate(&s).unwrap();
        let (b, b0) = h2.tabulate(&s).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let tp = t_from_values(&s, &sum, a0 + b0).value;
        let tm = t_from_values(&s, &diff, a0 - b0).value;
        let direct = t_bilinear(&s, &h1, &h2).unwrap();
        assert!(((tp - tm) / 4.0 - direct).abs() < 1e-10 * direct.abs().max(1.0));
        assert_eq!(t_functional(&s, &ShrinkageFunction::constant(0.0)).unwrap().value, 0.0);
    }

    #[test]
    fn t_matrix_reproduces_t() {
        let s = spec(&[1.0, 4.0], 2.0, 96);
        let h: ShrinkageFunction = Family::RidgeInverse { lambda: 1.0 }.into();
        let (v, v0) = h.tabulate(&s).unwrap();
        let mut full = v.clone();
        full.push(v0);
        let a = t_matrix(&s);
        let d = full.len();
        let quad: f64 = (0..d).map(|i| (0..d).map(|j| full[i] * a[i * d + j] * full[j]).sum::<f64>()).sum();
        let t = t_functional(&s, &h).unwrap().value;
        assert!((quad - t).abs() < 1e-10 * t.abs());
    }

    #[test]
    fn two_resolvent_symmetry_and_reflection() {
        let s = spec(&[1.0, 4.0], 1.0 / 3.0, 64);
        let z1 = Complex64::new(1.0, 1.0);
        let z2 = Complex64::new(2.0, 0.5);
        let a = two_resolvent_limit(&s, z1, z2).unwrap();
        let b = two_resolvent_limit(&s, z2, z1).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm());
        let c = two_resolvent_limit(&s, z1.conj(), z2.conj()).unwrap();
        assert!((c - a.conj()).norm() < 1e-10 * a.norm());
        let near = two_resolvent_limit(&s, z1, z1 + Complex64::new(1e-6, 0.0)).unwrap();
        let same = two_resolvent_limit(&s, z1, z1).unwrap();
        assert!((near - same).norm() < 1e-5 * same.norm());
    }

    #[test]
    fn two_resolvent_identity_oracle() {
        // For Σ = I the limit is ∫ dF(x) / ((x - z1)(x - z2)) = (m(z1) - m(z2)) / (z1 - z2).
        let gamma = 0.5;
        let s = spec(&[1.0], gamma, 64);
        let z1 = Complex64::new(1.0, 1.0);
        let z2 = Complex64::new(2.0, 1.0);
        let m = |z: Complex64| {
            let mc = companion_transform(s.population(), s.gamma(), z).unwrap();
            (mc + (1.0 - gamma) / z) / gamma
        };
        let expected = (m(z1) - m(z2)) / (z1 - z2);
        let got = two_resolvent_limit(&s, z1, z2).unwrap();
        assert!((got - expected).norm() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn lp_shrinkers_identity() {
        let s = spec(&[1.0], 0.5, 128);
        let ShrinkageFunction::Grid { grid, .. } = lp_covariance_shrinker(&s) else { panic!() };
        assert!(grid.iter().all(|v| (v - 1.0).abs() < 1e-6));
        let ShrinkageFunction::Grid { grid, .. } = lp_precision_shrinker(&s).unwrap() else { panic!() };
        assert!(grid.iter().all(|v| (v - 1.0).abs() < 1e-6));

        let s2 = spec(&[1.0], 2.0, 128);
        let ShrinkageFunction::Grid { at_zero, .. } = lp_covariance_shrinker(&s2) else { panic!() };
        assert!((at_zero - 1.0).abs() < 1e-4);
        let ShrinkageFunction::Grid { at_zero, .. } = lp_precision_shrinker(&s2).unwrap() else { panic!() };
        assert!((at_zero - 1.0).abs() < 1e-4);
    }

    #[test]
    fn lp_precision_scale_equivariance() {
        let c = 3.0;
        let s1 = spec(&[1.0], 0.5, 96);
        let sc = spec(&[c], 0.5, 96);
        let ShrinkageFunction::Grid { grid: g1, .. } = lp_precision_shrinker(&s1).unwrap() else { panic!() };
        let ShrinkageFunction::Grid { grid: gc, .. } = lp_precision_shrinker(&sc).unwrap() else { panic!() };
        for (a, b) in g1.iter().zip(&gc) {
            assert!((a / c - b).abs() < 1e-8);
        }
    }
}
