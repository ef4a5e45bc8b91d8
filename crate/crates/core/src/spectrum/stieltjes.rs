//! Fixed-point and Newton solvers for the generalized Marchenko–Pastur
//! equation.
//!
//! Everything is phrased through the inverse of the companion transform,
//!
//! ```text
//! z(m) = -1/m + γ ∫ t / (1 + t m) dH(t),
//! ```
//!
//! whose root in the upper half plane is `m̲(z)`. The Stieltjes transform of
//! `F_{γ,H}` itself follows from `m̲(z) = -(1-γ)/z + γ m(z)`.

use num_complex::Complex64;

use super::population::{AspectRatio, Atom, PopulationSpectrum};
use crate::error::{Error, Result};

/// Relaxation factor of the damped fixed-point iteration.
const DAMPING: f64 = 0.5;
const MAX_DAMPED_ITERS: usize = 50_000;
const MAX_NEWTON_ITERS: usize = 100;
/// Largest acceptable residual of the `m` fixed-point equation.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Imaginary offsets used to walk down to the real axis.
pub const EPS_LADDER: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// The map `m̲ ↦ z(m̲)` and its derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct InverseMap<'a> {
    atoms: &'a [Atom],
    gamma: f64,
}

impl<'a> InverseMap<'a> {
    pub(crate) fn new(h: &'a PopulationSpectrum, gamma: AspectRatio) -> Self {
        Self { atoms: h.atoms(), gamma: gamma.value() }
    }

    pub(crate) fn atoms(&self) -> &'a [Atom] {
        self.atoms
    }

    /// `(z(m), z'(m))` for complex `m`.
    pub(crate) fn eval(&self, m: Complex64) -> (Complex64, Complex64) {
        let mut s1 = Complex64::new(0.0, 0.0);
        let mut s2 = Complex64::new(0.0, 0.0);
        for a in self.atoms {
            let inv = 1.0 / (1.0 + a.t * m);
            let q = a.w * a.t * inv;
            s1 += q;
            s2 += q * a.t * inv;
        }
        let inv_m = 1.0 / m;
        (-inv_m + self.gamma * s1, inv_m * inv_m - self.gamma * s2)
    }

    pub(crate) fn z_real(&self, m: f64) -> f64 {
        let s: f64 = self.atoms.iter().map(|a| a.w * a.t / (1.0 + a.t * m)).sum();
        -1.0 / m + self.gamma * s
    }

    pub(crate) fn dz_real(&self, m: f64) -> f64 {
        let s: f64 = self
            .atoms
            .iter()
            .map(|a| {
                let d = 1.0 + a.t * m;
                a.w * a.t * a.t / (d * d)
            })
            .sum();
        1.0 / (m * m) - self.gamma * s
    }

    /// `(z''(m), z'''(m))` for real `m`.
    pub(crate) fn higher_derivs_real(&self, m: f64) -> (f64, f64) {
        let (mut s3, mut s4) = (0.0, 0.0);
        for a in self.atoms {
            let q = a.t / (1.0 + a.t * m);
            let q3 = q * q * q;
            s3 += a.w * q3;
            s4 += a.w * q3 * q;
        }
        let inv = 1.0 / m;
        (-2.0 * inv * inv * inv + 2.0 * self.gamma * s3, 6.0 * inv.powi(4) - 6.0 * self.gamma * s4)
    }

    /// One step of the companion fixed point `m̲ ← 1 / (-z + γ ∫ t/(1+t m̲) dH)`.
    fn fixed_point_map(&self, z: Complex64, m: Complex64) -> Complex64 {
        let s: Complex64 = self.atoms.iter().map(|a| a.w * a.t / (1.0 + a.t * m)).sum();
        1.0 / (-z + self.gamma * s)
    }

    /// Residual of `m = ∫ dH(t) / (t(1-γ-γ z m) - z)` at the Stieltjes value
    /// implied by the companion value `mc`.
    pub(crate) fn residual(&self, z: Complex64, mc: Complex64) -> f64 {
        let g = self.gamma;
        let m = plain_from_companion(g, z, mc);
        let rhs: Complex64 = self
            .atoms
            .iter()
            .map(|a| a.w / (a.t * (1.0 - g - g * z * m) - z))
            .sum();
        (m - rhs).norm()
    }
}

pub(crate) fn plain_from_companion(gamma: f64, z: Complex64, mc: Complex64) -> Complex64 {
    (mc + (1.0 - gamma) / z) / gamma
}

/// Newton's method on `z(m) = target` restricted to `Im m > 0`. Returns `None`
/// when the iteration stalls or would have to leave the upper half plane.
pub(crate) fn newton(map: &InverseMap<'_>, target: Complex64, start: Complex64) -> Option<Complex64> {
    let mut m = start;
    if !(m.im > 0.0) || !m.is_finite() {
        return None;
    }
    let scale = 1.0 + target.norm();
    let (mut zm, mut dz) = map.eval(m);
    let mut r = (zm - target).norm();
    for _ in 0..MAX_NEWTON_ITERS {
        if r <= 1e-14 * scale * (1.0 + m.norm()) {
            return Some(m);
        }
        let step = (zm - target) / dz;
        if !step.is_finite() {
            return None;
        }
        let mut lambda = 1.0;
        loop {
            let cand = m - lambda * step;
            if cand.im > 0.0 {
                let (zc, dc) = map.eval(cand);
                let rc = (zc - target).norm();
                if rc < r {
                    m = cand;
                    zm = zc;
                    dz = dc;
                    r = rc;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                // No further decrease available: accept if already tight.
                return (r <= 1e-13 * scale * (1.0 + m.norm())).then_some(m);
            }
        }
    }
    (r <= 1e-12 * scale * (1.0 + m.norm())).then_some(m)
}

/// Companion transform `m̲(z)` for `Im z > 0`, optionally warm-started.
pub(crate) fn solve_companion(
    map: &InverseMap<'_>,
    z: Complex64,
    warm: Option<Complex64>,
) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("Stieltjes solve needs Im z > 0, got {z}")));
    }
    if let Some(m) = warm.and_then(|w| newton(map, z, w)) {
        return finish(map, z, m);
    }
    let mut m = warm.filter(|w| w.im > 0.0).unwrap_or(-1.0 / z);
    let mut delta = f64::INFINITY;
    for _ in 0..MAX_DAMPED_ITERS {
        let next = (1.0 - DAMPING) * m + DAMPING * map.fixed_point_map(z, m);
        delta = (next - m).norm();
        m = next;
        if delta < 1e-9 * (1.0 + m.norm()) {
            break;
        }
    }
    match newton(map, z, m) {
        Some(root) => finish(map, z, root),
        None => Err(Error::Convergence {
            context: format!("companion Stieltjes transform at z = {z}"),
            iterations: MAX_DAMPED_ITERS,
            residual: delta,
        }),
    }
}

/// Newton steps on the plain equation `m = ∫ dH / (t(1-γ-γzm) - z)`.
///
/// Near an edge close to the origin `m̲ ↦ m` loses digits, so a companion
/// root accurate in `z(m̲)` can miss the plain residual tolerance.
fn polish_plain(map: &InverseMap<'_>, z: Complex64, mc: Complex64) -> Complex64 {
    let g = map.gamma;
    let mut m = plain_from_companion(g, z, mc);
    for _ in 0..8 {
        let (mut f, mut df) = (m, Complex64::new(1.0, 0.0));
        for a in map.atoms() {
            let d = a.t * (1.0 - g - g * z * m) - z;
            f -= a.w / d;
            df -= a.w * g * z * a.t / (d * d);
        }
        let next = m - f / df;
        if !(next.is_finite() && next.im > 0.0) {
            break;
        }
        m = next;
    }
    -(1.0 - g) / z + g * m
}

fn finish(map: &InverseMap<'_>, z: Complex64, m: Complex64) -> Result<Complex64> {
    let mut m = m;
    let mut residual = map.residual(z, m);
    if residual >= RESIDUAL_TOL {
        let polished = polish_plain(map, z, m);
        let r = map.residual(z, polished);
        if r < residual && polished.im > 0.0 {
            (m, residual) = (polished, r);
        }
    }
    if residual < RESIDUAL_TOL {
        Ok(m)
    } else {
        Err(Error::Convergence {
            context: format!("Stieltjes fixed point at z = {z}"),
            iterations: MAX_NEWTON_ITERS,
            residual,
        })
    }
}

/// Limit of `m̲(x + iε)` as `ε ↓ 0`.
///
/// Walks `ε` down the ladder `1e-1 … 1e-7`, warm-starting each level from the
/// previous one, then solves `z(m̲) = x` on the real axis itself. The
/// `ε = 1e-7` value is kept when the real-axis solve fails (at or beyond a
/// support edge).
pub(crate) fn boundary_value(map: &InverseMap<'_>, x: f64) -> Result<Complex64> {
    let mut m: Option<Complex64> = None;
    for &eps in EPS_LADDER.iter() {
        m = Some(solve_companion(map, Complex64::new(x, eps), m)?);
    }
    let approx = m.expect("ladder is non-empty");
    let target = Complex64::new(x, 0.0);
    let exact = newton(map, target, approx).filter(|r| map.residual(target, *r) < RESIDUAL_TOL);
    let v = exact.unwrap_or(approx);
    Ok(Complex64::new(v.re, v.im.max(0.0)))
}

/// Stieltjes transform of `F_{γ,H}` together with its companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesValue {
    /// `m(z)`, transform of the limiting spectral distribution.
    pub m: Complex64,
    /// `m̲(z) = -(1-γ)/z + γ m(z)`.
    pub m_companion: Complex64,
    /// Residual of the fixed-point equation for `m`.
    pub residual: f64,
}

/// Solves the Marchenko–Pastur equation
/// `m = ∫ dH(t) / (t(1-γ-γ z m) - z)` at a point of the upper half plane.
pub fn solve_stieltjes(h: &PopulationSpectrum, gamma: AspectRatio, z: Complex64) -> Result<StieltjesValue> {
    let map = InverseMap::new(h, gamma);
    let mc = solve_companion(&map, z, None)?;
    Ok(StieltjesValue {
        m: plain_from_companion(gamma.value(), z, mc),
        m_companion: mc,
        residual: map.residual(z, mc),
    })
}

/// `m̲(z)` for any non-real `z`, using `m̲(z̄) = conj(m̲(z))` below the axis.
pub fn companion_transform(h: &PopulationSpectrum, gamma: AspectRatio, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::Domain(format!("companion transform needs non-real z, got {z}")));
    }
    let map = InverseMap::new(h, gamma);
    if z.im > 0.0 {
        solve_companion(&map, z, None)
    } else {
        Ok(solve_companion(&map, z.conj(), None)?.conj())
    }
}

/// `m̲'(z)` from the inverse-function rule `1 / z'(m̲)`.
pub fn companion_derivative(h: &PopulationSpectrum, gamma: AspectRatio, m_companion: Complex64) -> Complex64 {
    let map = InverseMap::new(h, gamma);
    1.0 / map.eval(m_companion).1
}
