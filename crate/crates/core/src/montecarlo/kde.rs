use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Fewest eigenvalues accepted by [`kernel_estimate_fg`].
pub const MIN_KDE_SAMPLES: usize = 100;

/// Kernel estimates of the boundary values `f`, `g` of the companion
/// transform on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSpectrumEstimate {
    pub x: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub bandwidth: f64,
}

/// Epanechnikov kernel `3/4 (1 - v²)` on `|v| < 1`.
fn kernel(v: f64) -> f64 {
    if v.abs() < 1.0 {
        0.75 * (1.0 - v * v)
    } else {
        0.0
    }
}

/// Principal value `PV ∫ K(u) / (u - v) du` of the Epanechnikov kernel.
fn kernel_hilbert(v: f64) -> f64 {
    let edge = if (v.abs() - 1.0).abs() < 1e-300 {
        0.0
    } else {
        (1.0 - v * v) * ((1.0 - v) / (1.0 + v)).abs().ln()
    };
    0.75 * (edge - 2.0 * v)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] + frac * (sorted[k + 1] - sorted[k])
    } else {
        sorted[k]
    }
}

/// Estimates `g = γπ·(density of F)` by an Epanechnikov kernel density
/// estimate of the nonzero sample eigenvalues, and `f` by the exact
/// principal-value transform of that estimate.
///
/// Eigenvalues below `1e-10 · max` count as the null block of a `γ > 1`
/// design; their contribution to `f` is exact. The default bandwidth is
/// `IQR · N^{-1/3}` over the `N` nonzero eigenvalues, and the default grid
/// has 512 points spanning the eigenvalue range.
pub fn kernel_estimate_fg(
    eigenvalues: &[f64],
    gamma: f64,
    bandwidth: Option<f64>,
    grid: Option<&[f64]>,
) -> Result<EmpiricalSpectrumEstimate> {
    if eigenvalues.len() < MIN_KDE_SAMPLES {
        return Err(Error::Config(format!(
            "kernel estimation needs at least {MIN_KDE_SAMPLES} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma = {gamma} must be positive")));
    }
    let p = eigenvalues.len() as f64;
    let top = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut nonzero: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v > 1e-10 * top).collect();
    nonzero.sort_by(f64::total_cmp);
    if nonzero.len() < MIN_KDE_SAMPLES {
        return Err(Error::Config(format!("only {} nonzero eigenvalues", nonzero.len())));
    }
    let null_mass = (eigenvalues.len() - nonzero.len()) as f64 / p;
    let h = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::Config(format!("bandwidth {b} must be positive"))),
        None => {
            let iqr = quantile(&nonzero, 0.75) - quantile(&nonzero, 0.25);
            iqr * (nonzero.len() as f64).powf(-1.0 / 3.0)
        }
    };
    if !(h > 0.0) {
        return Err(Error::Numerical("eigenvalues have zero spread".into()));
    }
    let x: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lo = (nonzero[0] - h).max(0.5 * nonzero[0]);
            let hi = nonzero[nonzero.len() - 1] + h;
            (0..512).map(|k| lo + (hi - lo) * k as f64 / 511.0).collect()
        }
    };
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("estimation grid must be positive".into()));
    }
    let mut f_hat = Vec::with_capacity(x.len());
    let mut g_hat = Vec::with_capacity(x.len());
    for &xi in &x {
        let mut dens = 0.0;
        let mut hilbert = 0.0;
        for &mu in &nonzero {
            let v = (xi - mu) / h;
            dens += kernel(v);
            hilbert += kernel_hilbert(v);
        }
        dens /= p * h;
        // Re ∫ dF(λ)/(λ - x) including the null block at 0.
        let re_m = hilbert / (p * h) - null_mass / xi;
        f_hat.push(-(1.0 - gamma) / xi + gamma * re_m);
        g_hat.push(gamma * PI * dens);
    }
    Ok(EmpiricalSpectrumEstimate { x, f_hat, g_hat, bandwidth: h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hilbert_of_kernel_matches_quadrature() {
        for v in [-2.0, -0.5, 0.0, 0.3, 0.9, 1.7] {
            // PV integral by symmetric subtraction: ∫ (K(u) - K(v)) / (u - v) + K(v) ln|(1-v)/(1+v)|.
            let n = 200_000;
            let mut s = 0.0;
            for k in 0..n {
                let u = -1.0 + 2.0 * (k as f64 + 0.5) / n as f64;
                s += (kernel(u) - kernel(v)) / (u - v) * 2.0 / n as f64;
            }
            s += kernel(v) * ((1.0 - v) / (1.0 + v)).abs().ln();
            assert!((s - kernel_hilbert(v)).abs() < 1e-6, "v = {v}: {s} vs {}", kernel_hilbert(v));
        }
    }

    #[test]
    fn rejects_small_samples() {
        assert!(matches!(kernel_estimate_fg(&[1.0; 50], 0.5, None, None), Err(Error::Config(_))));
    }

    #[test]
    fn density_estimate_integrates_to_nonzero_mass() {
        let eig: Vec<f64> = (0..400).map(|k| if k < 100 { 0.0 } else { 1.0 + (k as f64) / 400.0 }).collect();
        let est = kernel_estimate_fg(&eig, 4.0 / 3.0, Some(0.05), None).unwrap();
        let dx = est.x[1] - est.x[0];
        let mass: f64 = est.g_hat.iter().map(|g| g * dx).sum::<f64>() / (4.0 / 3.0 * PI);
        assert!((mass - 0.75).abs() < 1e-2, "{mass}");
        assert!(est.g_hat.iter().all(|&g| g >= 0.0));
    }
}
