use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::population::{AspectRatio, PopulationSpectrum};
use super::stieltjes::{boundary_value, InverseMap};
use super::support::{find_support, sharp_merges, Interval};
use crate::error::{Error, Result};

/// Smallest accepted total grid size.
pub const MIN_GRID_SIZE: usize = 64;
/// Density dips narrower than this fraction of their support interval split
/// it into separately clustered quadrature pieces.
const SHARP_MERGE: f64 = 1e-2;
/// Every quadrature piece gets at least this many nodes.
const MIN_NODES_PER_INTERVAL: usize = 48;
/// Tolerance of the mass and first-moment checks run after construction.
pub const INVARIANT_TOL: f64 = 1e-4;

/// `m̲(0)` and `m̲'(0)`, defined when `γ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompanionAtZero {
    pub m0: f64,
    pub m0_prime: f64,
}

/// Companion transform at the origin for `γ > 1`.
///
/// `m0` is the positive root of `z(m̲) = 0`, equivalently of
/// `γ ∫ t m̲ / (1 + t m̲) dH(t) = 1`, whose left side increases from 0 to `γ`
/// on `(0, ∞)`. `m0_prime = 1 / z'(m0)`.
pub fn companion_at_zero(h: &PopulationSpectrum, gamma: AspectRatio) -> Result<CompanionAtZero> {
    if gamma.value() < 1.0 {
        return Err(Error::Domain(format!(
            "m̲(0) is finite only for γ > 1, got γ = {}",
            gamma.value()
        )));
    }
    if h.min_location() <= 0.0 {
        return Err(Error::Domain("population eigenvalues must be positive".into()));
    }
    let map = InverseMap::new(h, gamma);
    let g = gamma.value();
    let psi = |m: f64| g * h.atoms().iter().map(|a| a.w * a.t * m / (1.0 + a.t * m)).sum::<f64>() - 1.0;
    let mut lo = 0.0;
    let mut hi = 1.0 / h.mean();
    while psi(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if psi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m0 = 0.5 * (lo + hi);
    let dz = map.dz_real(m0);
    if !(dz > 0.0) {
        return Err(Error::Numerical(format!("z'(m̲(0)) = {dz} is not positive")));
    }
    Ok(CompanionAtZero { m0, m0_prime: 1.0 / dz })
}

/// Boundary values `(f, g)` of the companion transform at a real point of the
/// support, recomputing the support first. Prefer
/// [`LimitingSpectrum::boundary_values`] when a spectrum is already built.
pub fn boundary_values(h: &PopulationSpectrum, gamma: AspectRatio, x: f64) -> Result<(f64, f64)> {
    let support = find_support(h, gamma)?;
    check_in_support(&support, x)?;
    let m = boundary_value(&InverseMap::new(h, gamma), x)?;
    Ok((m.re, m.im))
}

fn check_in_support(support: &[Interval], x: f64) -> Result<()> {
    let ok = support.iter().any(|iv| {
        let tol = 1e-6 * iv.width();
        x >= iv.lo - tol && x <= iv.hi + tol
    });
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("x = {x} lies outside the support {support:?}")))
    }
}

/// Solved limiting spectrum `F_{γ,H}` on a quadrature grid.
///
/// Each support interval `[a, b]` carries nodes `x = c - r cos θ` at the
/// midpoints `θ_j = π (j + ½) / n` with weights `(π/n) r sin θ_j`, so that
/// integrands with square-root edge behaviour are integrated spectrally. The
/// node count per interval is a multiple of three, which embeds the rule with
/// `n/3` nodes (every third node) for error estimates.
#[derive(Debug)]
pub struct LimitingSpectrum {
    gamma: AspectRatio,
    population: PopulationSpectrum,
    support: Vec<Interval>,
    x: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    density: Vec<f64>,
    weights: Vec<f64>,
    coarse_weights: Vec<f64>,
    dm: Vec<Complex64>,
    atom0_mass: f64,
    zero: Option<CompanionAtZero>,
    pub(crate) kernel_cache: OnceLock<Vec<f64>>,
}

impl Clone for LimitingSpectrum {
    fn clone(&self) -> Self {
        Self {
            gamma: self.gamma,
            population: self.population.clone(),
            support: self.support.clone(),
            x: self.x.clone(),
            f: self.f.clone(),
            g: self.g.clone(),
            density: self.density.clone(),
            weights: self.weights.clone(),
            coarse_weights: self.coarse_weights.clone(),
            dm: self.dm.clone(),
            atom0_mass: self.atom0_mass,
            zero: self.zero,
            kernel_cache: OnceLock::new(),
        }
    }
}

/// Support intervals cut at the given interior breakpoints.
fn quadrature_pieces(support: &[Interval], breaks: &[f64]) -> Vec<Interval> {
    let mut out = Vec::with_capacity(support.len() + breaks.len());
    for iv in support {
        let mut lo = iv.lo;
        for &b in breaks.iter().filter(|&&b| iv.lo < b && b < iv.hi) {
            out.push(Interval { lo, hi: b });
            lo = b;
        }
        out.push(Interval { lo, hi: iv.hi });
    }
    out
}

fn allocate_nodes(support: &[Interval], grid_size: usize) -> Vec<usize> {
    let total: f64 = support.iter().map(Interval::width).sum();
    support
        .iter()
        .map(|iv| {
            let share = (grid_size as f64 * iv.width() / total).round() as usize;
            let n = share.max(MIN_NODES_PER_INTERVAL);
            n.div_ceil(3) * 3
        })
        .collect()
}

impl LimitingSpectrum {
    /// Solves for `F_{γ,H}` and samples `f`, `g` and the density on a grid of
    /// roughly `grid_size` nodes.
    pub fn build(h: &PopulationSpectrum, gamma: AspectRatio, grid_size: usize) -> Result<Self> {
        if grid_size < MIN_GRID_SIZE {
            return Err(Error::Config(format!(
                "grid size {grid_size} is below the minimum {MIN_GRID_SIZE}"
            )));
        }
        let support = find_support(h, gamma)?;
        let breaks = sharp_merges(h, gamma, &support, SHARP_MERGE);
        let pieces = quadrature_pieces(&support, &breaks);
        let counts = allocate_nodes(&pieces, grid_size);

        let mut x = Vec::new();
        let mut weights = Vec::new();
        let mut coarse_weights = Vec::new();
        for (iv, &n) in pieces.iter().zip(&counts) {
            let c = 0.5 * (iv.lo + iv.hi);
            let r = 0.5 * iv.width();
            for j in 0..n {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                let w = std::f64::consts::PI / n as f64 * r * theta.sin();
                x.push(c - r * theta.cos());
                weights.push(w);
                coarse_weights.push(if j % 3 == 1 { 3.0 * w } else { 0.0 });
            }
        }

        let map = InverseMap::new(h, gamma);
        let values: Vec<Complex64> = x
            .par_iter()
            .map(|&xi| boundary_value(&map, xi))
            .collect::<Result<_>>()?;
        let dm: Vec<Complex64> = values.iter().map(|&m| 1.0 / map.eval(m).1).collect();

        let gv = gamma.value();
        let f: Vec<f64> = values.iter().map(|m| m.re).collect();
        let g: Vec<f64> = values.iter().map(|m| m.im).collect();
        let density = g.iter().map(|gi| gi / (gv * std::f64::consts::PI)).collect();
        let zero = if gv > 1.0 { Some(companion_at_zero(h, gamma)?) } else { None };

        let spec = Self {
            gamma,
            population: h.clone(),
            support,
            x,
            f,
            g,
            density,
            weights,
            coarse_weights,
            dm,
            atom0_mass: (1.0 - 1.0 / gv).max(0.0),
            zero,
            kernel_cache: OnceLock::new(),
        };
        spec.check_invariants()?;
        Ok(spec)
    }

    fn check_invariants(&self) -> Result<()> {
        if let Some(i) = self.g.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Numerical(format!("g({}) = {} is not a nonnegative number", self.x[i], self.g[i])));
        }
        let mass_defect = (self.total_mass() - 1.0).abs();
        if mass_defect > INVARIANT_TOL {
            return Err(Error::Numerical(format!("limiting spectrum mass is off by {mass_defect:.3e}")));
        }
        let moment_defect = (self.first_moment() - self.population.mean()).abs();
        if moment_defect > INVARIANT_TOL {
            return Err(Error::Numerical(format!(
                "limiting spectrum first moment is off by {moment_defect:.3e}"
            )));
        }
        Ok(())
    }

    pub fn gamma(&self) -> AspectRatio {
        self.gamma
    }

    pub fn population(&self) -> &PopulationSpectrum {
        &self.population
    }

    pub fn support(&self) -> &[Interval] {
        &self.support
    }

    /// Grid abscissae, increasing.
    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `f = Re m̲` on the grid.
    pub fn f_vals(&self) -> &[f64] {
        &self.f
    }

    /// `g = Im m̲` on the grid.
    pub fn g_vals(&self) -> &[f64] {
        &self.g
    }

    /// Density `F'(x) = g(x) / (γ π)` on the grid.
    pub fn density_vals(&self) -> &[f64] {
        &self.density
    }

    /// `dx` quadrature weights of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights of the embedded coarse rule (zero off its nodes).
    pub fn coarse_weights(&self) -> &[f64] {
        &self.coarse_weights
    }

    /// `m̲'(x)` on the grid.
    pub fn companion_derivative(&self) -> &[Complex64] {
        &self.dm
    }

    /// Mass of `F_{γ,H}` at zero, `max(1 - 1/γ, 0)`.
    pub fn atom0_mass(&self) -> f64 {
        self.atom0_mass
    }

    /// `m̲(0)`, present iff `γ > 1`.
    pub fn m0(&self) -> Option<f64> {
        self.zero.map(|z| z.m0)
    }

    /// `m̲'(0)`, present iff `γ > 1`.
    pub fn m0_prime(&self) -> Option<f64> {
        self.zero.map(|z| z.m0_prime)
    }

    pub fn companion_at_zero(&self) -> Option<CompanionAtZero> {
        self.zero
    }

    /// `|m̲|² = f² + g²` at node `j`.
    pub(crate) fn modulus_sq(&self, j: usize) -> f64 {
        self.f[j] * self.f[j] + self.g[j] * self.g[j]
    }

    /// Continuous part of `∫ φ dF` plus `φ(0)` times the atom at zero.
    pub fn integrate<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        let bulk: f64 = (0..self.len()).map(|j| phi(self.x[j]) * self.density[j] * self.weights[j]).sum();
        bulk + if self.atom0_mass > 0.0 { self.atom0_mass * phi(0.0) } else { 0.0 }
    }

    /// Total mass, continuous part plus the atom at zero.
    pub fn total_mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    pub fn first_moment(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// Boundary values `(f, g)` at an arbitrary point of the support.
    pub fn boundary_values(&self, x: f64) -> Result<(f64, f64)> {
        check_in_support(&self.support, x)?;
        let m = boundary_value(&InverseMap::new(&self.population, self.gamma), x)?;
        Ok((m.re, m.im))
    }

    /// Whether `self` was built for the given `(γ, H)`.
    pub fn matches(&self, gamma: AspectRatio, h: &PopulationSpectrum) -> bool {
        (self.gamma.value() - gamma.value()).abs() <= 1e-12 && &self.population == h
    }

    /// CSV with columns `x,f,g,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,f,g,density")?;
        for j in 0..self.len() {
            writeln!(out, "{},{},{},{}", self.x[j], self.f[j], self.g[j], self.density[j])?;
        }
        Ok(())
    }

    /// Summary without the grid arrays.
    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            gamma: self.gamma.value(),
            support: self.support.clone(),
            grid_size: self.len(),
            atom0_mass: self.atom0_mass,
            m0: self.m0(),
            m0_prime: self.m0_prime(),
            total_mass: self.total_mass(),
            first_moment: self.first_moment(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub gamma: f64,
    pub support: Vec<Interval>,
    pub grid_size: usize,
    pub atom0_mass: f64,
    pub m0: Option<f64>,
    pub m0_prime: Option<f64>,
    pub total_mass: f64,
    pub first_moment: f64,
}
