use faer::{Mat, Side};
use num_complex::Complex64;

use super::{Covariance, SimulationDraw};
use crate::error::{Error, Result};
use crate::functionals::Evaluator;
use crate::lda::{estimate_alpha2, Alpha2Estimate};
use crate::util::normal_cdf;

/// Eigendecomposition `S = U diag(λ) Uᵀ` of a sample covariance, `λ` increasing.
#[derive(Debug, Clone)]
pub struct SampleEigen {
    pub lambda: Vec<f64>,
    pub u: Mat<f64>,
}

impl SampleEigen {
    /// Decomposes `S = X Xᵀ / n` for a `p × n` data matrix.
    pub fn from_data(x: &Mat<f64>) -> Result<Self> {
        let n = x.ncols() as f64;
        let s = x * x.transpose() * faer::Scale(1.0 / n);
        Self::from_symmetric(&s)
    }

    pub fn from_symmetric(s: &Mat<f64>) -> Result<Self> {
        let eig = s
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("sample eigendecomposition failed: {e:?}")))?;
        let d = eig.S().column_vector();
        // Rounding can push null eigenvalues slightly negative.
        let lambda = (0..s.nrows()).map(|i| d[i].max(0.0)).collect();
        Ok(Self { lambda, u: eig.U().to_owned() })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Eigenvalues at or below this level are treated as exact zeros.
    pub fn null_threshold(&self) -> f64 {
        1e-10 * self.lambda.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE)
    }

    /// `h(λ_k)` for every eigenvalue, failing on non-finite values.
    pub fn apply(&self, h: &Evaluator) -> Result<Vec<f64>> {
        let tiny = self.null_threshold();
        self.lambda
            .iter()
            .map(|&l| {
                let v = h.eval(if l <= tiny { 0.0 } else { l });
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Evaluation(format!("h is not finite at sample eigenvalue {l}")))
                }
            })
            .collect()
    }

    /// `Uᵀ v`.
    pub fn rotate(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        (0..p).map(|k| (0..p).map(|i| self.u[(i, k)] * v[i]).sum()).collect()
    }

    /// `U c`.
    pub fn unrotate(&self, c: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut out = vec![0.0; p];
        for k in 0..p {
            if c[k] != 0.0 {
                for i in 0..p {
                    out[i] += self.u[(i, k)] * c[k];
                }
            }
        }
        out
    }

    /// `B = Uᵀ Σ U`, the population covariance in the sample eigenbasis.
    pub fn project(&self, cov: &Covariance) -> Mat<f64> {
        let sigma_u = match &cov.diag {
            Some(d) => Mat::from_fn(self.dim(), self.dim(), |i, k| d[i] * self.u[(i, k)]),
            None => cov.to_mat() * &self.u,
        };
        self.u.transpose() * sigma_u
    }

    /// Singular system `(√λ_i, u_i, v_i)` of `X/√n` restricted to the
    /// nonzero eigenvalues, with `v_i = Xᵀu_i / (√n √λ_i)`.
    pub fn singular_system(&self, x: &Mat<f64>) -> (Vec<f64>, Mat<f64>, Mat<f64>) {
        let tiny = self.null_threshold();
        let keep: Vec<usize> = (0..self.dim()).filter(|&k| self.lambda[k] > tiny).collect();
        let sqrt_n = (x.ncols() as f64).sqrt();
        let u = Mat::from_fn(self.dim(), keep.len(), |i, j| self.u[(i, keep[j])]);
        let mut v = x.transpose() * &u;
        let sv: Vec<f64> = keep.iter().map(|&k| self.lambda[k].sqrt()).collect();
        for j in 0..keep.len() {
            let s = 1.0 / (sqrt_n * sv[j]);
            for i in 0..v.nrows() {
                v[(i, j)] *= s;
            }
        }
        (sv, u, v)
    }
}

/// Empirical regression outcomes along a family of shrinkers that share one
/// eigendecomposition of the draw.
pub struct RegressionPath<'a> {
    draw: &'a SimulationDraw,
    cov: &'a Covariance,
    eig: SampleEigen,
    /// `Uᵀ X y / n`.
    b: Vec<f64>,
    y_norm2: f64,
    w_sigma_w: f64,
}

/// Prepares a draw for [`RegressionPath::evaluate`].
pub fn regression_path<'a>(draw: &'a SimulationDraw, cov: &'a Covariance) -> Result<RegressionPath<'a>> {
    if draw.y.is_empty() {
        return Err(Error::Config("draw carries no regression responses".into()));
    }
    let eig = SampleEigen::from_data(&draw.x)?;
    let n = draw.x.ncols();
    let xy: Vec<f64> = (0..draw.x.nrows())
        .map(|i| (0..n).map(|j| draw.x[(i, j)] * draw.y[j]).sum::<f64>() / n as f64)
        .collect();
    let b = eig.rotate(&xy);
    let y_norm2 = draw.y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let w_sigma_w = cov.quad_form(&draw.signal);
    Ok(RegressionPath { draw, cov, eig, b, y_norm2, w_sigma_w })
}

impl RegressionPath<'_> {
    /// `(test_risk, train_error)` of `ŵ = Σ h(λ_i) u_i v_iᵀ y/√n`.
    pub fn evaluate(&self, h: &Evaluator) -> Result<(f64, f64)> {
        let hv = self.eig.apply(h)?;
        let tiny = self.eig.null_threshold();
        // Null directions have no right singular vector, so ŵ has no component there.
        let c: Vec<f64> = (0..self.eig.dim())
            .map(|k| {
                let l = self.eig.lambda[k];
                if l <= tiny {
                    0.0
                } else {
                    hv[k] * self.b[k] / l.sqrt()
                }
            })
            .collect();
        let w_hat = self.eig.unrotate(&c);
        Ok(self.outcomes(&w_hat, &c))
    }

    fn outcomes(&self, w_hat: &[f64], c: &[f64]) -> (f64, f64) {
        let diff: Vec<f64> = w_hat.iter().zip(&self.draw.signal).map(|(a, b)| a - b).collect();
        let test = 1.0 + self.cov.quad_form(&diff);
        let cb: f64 = c.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        let quad: f64 = c.iter().zip(&self.eig.lambda).map(|(a, l)| l * a * a).sum();
        (test, (self.y_norm2 - 2.0 * cb + quad).max(0.0))
    }

    pub fn null_risk(&self) -> f64 {
        1.0 + self.w_sigma_w
    }

    pub fn eigen(&self) -> &SampleEigen {
        &self.eig
    }
}

/// Conditional test risk `1 + (ŵ-w)ᵀΣ(ŵ-w)` and training error
/// `‖y - Xᵀŵ‖²/n` of a shrinkage estimator on one draw.
pub fn empirical_regression_risk(draw: &SimulationDraw, h: &Evaluator, cov: &Covariance) -> Result<(f64, f64)> {
    regression_path(draw, cov)?.evaluate(h)
}

/// Sufficient statistics of an LDA draw, reusable across signal strengths:
/// with `δ = α δ₀`, `δ̂ = ξ + α δ₀` and `Σ̂` does not depend on `α`.
#[derive(Debug, Clone)]
pub struct LdaStatistics {
    pub eig: SampleEigen,
    /// Noise part `ξ` of `δ̂`.
    pub xi: Vec<f64>,
    pub signal_unit: Vec<f64>,
    pub alpha: f64,
    pub n: usize,
}

impl LdaStatistics {
    /// `δ̂ = n⁻¹ Σ y_i x_i` and the label-signed centered covariance
    /// `Σ̂ = n⁻¹ Σ (y_i x_i - δ̂)(y_i x_i - δ̂)ᵀ`.
    pub fn from_draw(draw: &SimulationDraw) -> Result<Self> {
        if draw.labels.is_empty() {
            return Err(Error::Config("draw carries no class labels".into()));
        }
        let (p, n) = (draw.x.nrows(), draw.x.ncols());
        let delta_hat: Vec<f64> =
            (0..p).map(|i| (0..n).map(|j| draw.labels[j] * draw.x[(i, j)]).sum::<f64>() / n as f64).collect();
        let centered = Mat::from_fn(p, n, |i, j| draw.labels[j] * draw.x[(i, j)] - delta_hat[i]);
        let eig = SampleEigen::from_data(&centered)?;
        let xi = delta_hat.iter().zip(&draw.signal).map(|(d, s)| d - s).collect();
        Ok(Self { eig, xi, signal_unit: draw.signal_unit.clone(), alpha: draw.alpha, n })
    }

    pub fn delta(&self, alpha: f64) -> Vec<f64> {
        self.signal_unit.iter().map(|v| alpha * v).collect()
    }

    pub fn delta_hat(&self, alpha: f64) -> Vec<f64> {
        self.xi.iter().zip(&self.signal_unit).map(|(x, v)| x + alpha * v).collect()
    }

    /// `h(Σ̂) v`.
    pub fn apply(&self, h: &[f64], v: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = self.eig.rotate(v).iter().zip(h).map(|(a, b)| a * b).collect();
        self.eig.unrotate(&c)
    }

    /// Conditional misclassification probability `Φ(-δᵀv / √(vᵀΣv))` of the
    /// rule `sign(xᵀv)`, `v = h(Σ̂)δ̂`, at signal strength `alpha`; also
    /// whether the denominator vanished (error 0.5).
    pub fn error(&self, h: &[f64], cov: &Covariance, alpha: f64) -> (f64, bool) {
        let v = self.apply(h, &self.delta_hat(alpha));
        let num: f64 = self.delta(alpha).iter().zip(&v).map(|(a, b)| a * b).sum();
        let den = cov.quad_form(&v);
        if !(den > 0.0) {
            return (0.5, true);
        }
        (normal_cdf(-num / den.sqrt()), false)
    }

    /// `‖r(Σ̂) δ̂ - δ‖²`.
    pub fn mean_loss(&self, r: &[f64], alpha: f64) -> f64 {
        let est = self.apply(r, &self.delta_hat(alpha));
        est.iter().zip(self.delta(alpha)).map(|(a, b)| (a - b).powi(2)).sum()
    }

    /// `‖δ̂‖² - tr(Σ̂)/n`.
    pub fn alpha2(&self, alpha: f64) -> Result<Alpha2Estimate> {
        let norm2 = self.delta_hat(alpha).iter().map(|v| v * v).sum();
        estimate_alpha2(norm2, self.eig.lambda.iter().sum(), self.n)
    }
}

/// Conditional LDA error of one draw at its own signal strength, with the
/// degenerate flag.
pub fn empirical_lda_error(draw: &SimulationDraw, h: &Evaluator, cov: &Covariance) -> Result<(f64, bool)> {
    let stats = LdaStatistics::from_draw(draw)?;
    let hv = stats.eig.apply(h)?;
    if hv.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("LDA shrinkage must be nonnegative".into()));
    }
    Ok(stats.error(&hv, cov, draw.alpha))
}

/// `p⁻¹ ‖Σ - h(S_n)‖²_F`.
pub fn empirical_frobenius_loss(eig: &SampleEigen, h: &Evaluator, cov: &Covariance) -> Result<f64> {
    let hv = eig.apply(h)?;
    let bkk = diag_projection(eig, cov);
    let p = eig.dim() as f64;
    let cross: f64 = hv.iter().zip(&bkk).map(|(a, b)| a * b).sum();
    let sq: f64 = hv.iter().map(|v| v * v).sum();
    Ok(cov.normalized_trace_sq() - (2.0 * cross - sq) / p)
}

/// `u_kᵀ Σ u_k` for every sample eigenvector.
pub fn diag_projection(eig: &SampleEigen, cov: &Covariance) -> Vec<f64> {
    let p = eig.dim();
    match &cov.diag {
        Some(d) => (0..p).map(|k| (0..p).map(|i| d[i] * eig.u[(i, k)].powi(2)).sum()).collect(),
        None => {
            let b = eig.project(cov);
            (0..p).map(|k| b[(k, k)]).collect()
        }
    }
}

/// `p⁻¹ tr(Σ h(S_n))`.
pub fn trace_m(eig: &SampleEigen, bkk: &[f64], h: &Evaluator) -> Result<f64> {
    let hv = eig.apply(h)?;
    Ok(hv.iter().zip(bkk).map(|(a, b)| a * b).sum::<f64>() / eig.dim() as f64)
}

/// `p⁻¹ tr(Σ h(S_n) Σ h(S_n))` given `B = UᵀΣU`.
pub fn trace_t(eig: &SampleEigen, b: &Mat<f64>, h: &Evaluator) -> Result<f64> {
    let hv = eig.apply(h)?;
    let p = eig.dim();
    let mut total = 0.0;
    for l in 0..p {
        let mut col = 0.0;
        for k in 0..p {
            col += hv[k] * b[(k, l)] * b[(k, l)];
        }
        total += col * hv[l];
    }
    Ok(total / p as f64)
}

/// `p⁻¹ tr(Σ (S_n - z1)⁻¹ Σ (S_n - z2)⁻¹)` given `B = UᵀΣU`.
pub fn trace_two_resolvent(eig: &SampleEigen, b: &Mat<f64>, z1: Complex64, z2: Complex64) -> Complex64 {
    let p = eig.dim();
    let r1: Vec<Complex64> = eig.lambda.iter().map(|&l| 1.0 / (l - z1)).collect();
    let r2: Vec<Complex64> = eig.lambda.iter().map(|&l| 1.0 / (l - z2)).collect();
    let mut total = Complex64::new(0.0, 0.0);
    for l in 0..p {
        let mut col = Complex64::new(0.0, 0.0);
        for k in 0..p {
            col += r1[k] * b[(k, l)] * b[(k, l)];
        }
        total += col * r2[l];
    }
    total / p as f64
}
