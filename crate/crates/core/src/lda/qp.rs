//! Primal active-set solver for `min hᵀQh` subject to `aᵀh = 1`, `h ≥ 0`,
//! with `Q` symmetric positive definite and `a ≥ 0`, `a ≠ 0`.
//!
//! On a free set `F` (complement of the bounds held at zero) the equality
//! constrained minimizer is `h_F = Q_FF⁻¹ a_F / (a_Fᵀ Q_FF⁻¹ a_F)`, so every
//! iteration is one Cholesky solve.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};

pub(crate) struct QpOutcome {
    pub h: Vec<f64>,
    /// Multiplier of the equality constraint; `Qh = ν a + μ` with `μ ≥ 0`.
    pub nu: f64,
    pub kkt_residual: f64,
    pub active_bounds: usize,
    pub iterations: usize,
}

const MAX_ITERS: usize = 10_000;

fn free_solve(q: &Mat<f64>, a: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let k = free.len();
    let sub = Mat::from_fn(k, k, |i, j| q[(free[i], free[j])]);
    let rhs = Mat::from_fn(k, 1, |i, _| a[free[i]]);
    let llt = sub
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("QP Cholesky failed: {e:?}")))?;
    let y = llt.solve(&rhs);
    let denom: f64 = (0..k).map(|i| a[free[i]] * y[(i, 0)]).sum();
    if !(denom > 0.0) {
        return Err(Error::Numerical("QP reduced system is not positive definite".into()));
    }
    let mut h = vec![0.0; a.len()];
    for i in 0..k {
        h[free[i]] = y[(i, 0)] / denom;
    }
    Ok(h)
}

fn gradient(q: &Mat<f64>, h: &[f64]) -> Vec<f64> {
    let n = h.len();
    (0..n).map(|i| (0..n).map(|j| q[(i, j)] * h[j]).sum()).collect()
}

/// Relative KKT residual: stationarity on the free set, dual feasibility on
/// the active set, primal feasibility, all scaled by `|ν| max a`.
fn kkt(q: &Mat<f64>, a: &[f64], h: &[f64], at_bound: &[bool]) -> (f64, f64) {
    let g = gradient(q, h);
    let free: Vec<usize> = (0..h.len()).filter(|&i| !at_bound[i]).collect();
    let num: f64 = free.iter().map(|&i| g[i] * a[i]).sum();
    let den: f64 = free.iter().map(|&i| a[i] * a[i]).sum();
    let nu = if den > 0.0 { num / den } else { 0.0 };
    let scale = nu.abs() * a.iter().fold(0.0f64, |m, v| m.max(v.abs())) + f64::MIN_POSITIVE;
    let mut r = 0.0f64;
    for i in 0..h.len() {
        let s = g[i] - nu * a[i];
        r = r.max(if at_bound[i] { (-s).max(0.0) } else { s.abs() });
        r = r.max((-h[i]).max(0.0));
    }
    let feas = (a.iter().zip(h).map(|(x, y)| x * y).sum::<f64>() - 1.0).abs();
    ((r / scale).max(feas), nu)
}

pub(crate) fn solve(q: &Mat<f64>, a: &[f64]) -> Result<QpOutcome> {
    let n = a.len();
    if a.iter().any(|&v| v < 0.0) || a.iter().all(|&v| v == 0.0) {
        return Err(Error::Numerical("QP constraint vector must be nonnegative and nonzero".into()));
    }
    // Coordinates with a_i = 0 only add cost; they stay at zero.
    let mut at_bound: Vec<bool> = a.iter().map(|&v| v == 0.0).collect();
    let total: f64 = a.iter().sum();
    let mut h: Vec<f64> = a.iter().map(|&v| if v > 0.0 { 1.0 / total } else { 0.0 }).collect();

    for iter in 0..MAX_ITERS {
        let free: Vec<usize> = (0..n).filter(|&i| !at_bound[i]).collect();
        let cand = free_solve(q, a, &free)?;
        if free.iter().all(|&i| cand[i] >= 0.0) {
            h = cand;
            let g = gradient(q, &h);
            let nu: f64 = {
                let num: f64 = free.iter().map(|&i| g[i] * a[i]).sum();
                let den: f64 = free.iter().map(|&i| a[i] * a[i]).sum();
                num / den
            };
            // Release the bound with the most negative multiplier, if any.
            let release = (0..n)
                .filter(|&i| at_bound[i] && a[i] > 0.0)
                .map(|i| (i, g[i] - nu * a[i]))
                .filter(|&(_, m)| m < -1e-12 * nu.abs() * a[i_max(a)])
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match release {
                Some((i, _)) => at_bound[i] = false,
                None => {
                    let (kkt_residual, nu) = kkt(q, a, &h, &at_bound);
                    return Ok(QpOutcome {
                        h,
                        nu,
                        kkt_residual,
                        active_bounds: at_bound.iter().filter(|&&b| b).count(),
                        iterations: iter + 1,
                    });
                }
            }
        } else {
            // Step toward the candidate until the first coordinate hits zero.
            let mut tau = 1.0;
            let mut blocking = None;
            for &i in &free {
                if cand[i] < 0.0 {
                    let t = h[i] / (h[i] - cand[i]);
                    if t < tau {
                        tau = t;
                        blocking = Some(i);
                    }
                }
            }
            for &i in &free {
                h[i] += tau * (cand[i] - h[i]);
            }
            if let Some(i) = blocking {
                h[i] = 0.0;
                at_bound[i] = true;
            }
        }
    }
    Err(Error::Convergence {
        context: "active-set QP".into(),
        iterations: MAX_ITERS,
        residual: f64::NAN,
    })
}

fn i_max(a: &[f64]) -> usize {
    (0..a.len()).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_is_interior() {
        // Q = I, a = (1,1,1): h = (1/3, 1/3, 1/3).
        let q = Mat::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let out = solve(&q, &[1.0, 1.0, 1.0]).unwrap();
        for v in &out.h {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
        assert_eq!(out.active_bounds, 0);
        assert!(out.kkt_residual < 1e-12);
    }

    #[test]
    fn bound_becomes_active() {
        // Strong coupling pushes the equality-only solution negative in one coordinate.
        let q = Mat::from_fn(2, 2, |i, j| [[1.0, 0.9], [0.9, 1.0]][i][j]);
        let a = [1.0, 0.2];
        let out = solve(&q, &a).unwrap();
        assert!(out.h.iter().all(|&v| v >= 0.0));
        assert!((out.h[0] * a[0] + out.h[1] * a[1] - 1.0).abs() < 1e-14);
        // Compare with brute force over the feasible segment.
        let obj = |h: [f64; 2]| h[0] * h[0] + 1.8 * h[0] * h[1] + h[1] * h[1];
        let best = (0..=10_000)
            .map(|k| {
                let h1 = 5.0 * k as f64 / 10_000.0;
                obj([1.0 - 0.2 * h1, h1])
            })
            .fold(f64::INFINITY, f64::min);
        assert!(obj([out.h[0], out.h[1]]) <= best + 1e-12);
        assert!(out.kkt_residual < 1e-10);
    }
}
