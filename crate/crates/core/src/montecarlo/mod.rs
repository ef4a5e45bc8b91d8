//! Finite-sample simulation of the regression and LDA models.
//!
//! Replicate `r` of a configuration with seed `s` draws from a ChaCha8
//! stream seeded with `s ^ r`, so replicates are reproducible individually
//! and may run in any order.

mod empirical;
mod experiments;
mod kde;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{AspectRatio, PopulationSpectrum};

pub use empirical::{
    diag_projection, empirical_frobenius_loss, empirical_lda_error, empirical_regression_risk, regression_path,
    trace_m, trace_t, trace_two_resolvent, LdaStatistics, RegressionPath, SampleEigen,
};
pub use experiments::{
    run_lda_errors, run_regression_curve, summarize, trace_functional_experiment, CurveSummary, LdaErrorSummary,
    Summary, TraceSamples,
};
pub use kde::{kernel_estimate_fg, EmpiricalSpectrumEstimate, MIN_KDE_SAMPLES};

/// Covariance of the simulated features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    /// Diagonal with `⌊w_i p⌋` copies of each `t_i`, the remainder going to
    /// the atom of largest weight.
    Atoms { population: PopulationSpectrum },
    /// `Σ_ij = ρ^{|i-j|}`.
    ToeplitzAr { rho: f64 },
}

/// Distribution of the standardized entries of `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZDist {
    #[default]
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub n: usize,
    pub alpha: f64,
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub z_dist: ZDist,
    pub seed: u64,
    pub replicates: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n < 2 {
            return Err(Error::Config(format!("need p, n >= 2, got p = {}, n = {}", self.p, self.n)));
        }
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {} must be finite and >= 0", self.alpha)));
        }
        if let SigmaSpec::ToeplitzAr { rho } = self.sigma {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!("rho = {rho} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> Result<AspectRatio> {
        AspectRatio::from_dims(self.p, self.n)
    }

    /// Generator for replicate `r`.
    pub fn rng(&self, replicate: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ replicate as u64)
    }
}

/// Population covariance of a simulation, with its square root.
#[derive(Debug, Clone)]
pub struct Covariance {
    p: usize,
    /// Diagonal entries when `Σ` is diagonal.
    diag: Option<Vec<f64>>,
    /// Dense `Σ` and its symmetric square root otherwise.
    dense: Option<(Mat<f64>, Mat<f64>)>,
    eigenvalues: Vec<f64>,
}

impl Covariance {
    pub fn build(spec: &SigmaSpec, p: usize) -> Result<Self> {
        faer::set_global_parallelism(faer::Par::Seq);
        match spec {
            SigmaSpec::Atoms { population } => {
                let atoms = population.atoms();
                let mut counts: Vec<usize> = atoms.iter().map(|a| (a.w * p as f64).floor() as usize).collect();
                let placed: usize = counts.iter().sum();
                let heaviest = (0..atoms.len())
                    .max_by(|&i, &j| atoms[i].w.total_cmp(&atoms[j].w))
                    .expect("population has atoms");
                counts[heaviest] += p - placed;
                let diag: Vec<f64> = atoms.iter().zip(&counts).flat_map(|(a, &c)| std::iter::repeat(a.t).take(c)).collect();
                let mut eigenvalues = diag.clone();
                eigenvalues.sort_by(f64::total_cmp);
                Ok(Self { p, diag: Some(diag), dense: None, eigenvalues })
            }
            SigmaSpec::ToeplitzAr { rho } => {
                let sigma = Mat::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
                let eig = sigma
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|e| Error::Numerical(format!("eigendecomposition of Σ failed: {e:?}")))?;
                let s = eig.S().column_vector();
                let eigenvalues: Vec<f64> = (0..p).map(|i| s[i]).collect();
                if eigenvalues[0] <= 0.0 {
                    return Err(Error::Numerical("Toeplitz covariance is not positive definite".into()));
                }
                let u = eig.U();
                let scaled = Mat::from_fn(p, p, |i, k| u[(i, k)] * eigenvalues[k].sqrt());
                let root = &scaled * u.transpose();
                Ok(Self { p, diag: None, dense: Some((sigma, root)), eigenvalues })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Eigenvalues of `Σ`, increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Population spectrum that the limiting theory should use: the
    /// configured atoms for diagonal `Σ`, the eigenvalues otherwise.
    pub fn population(&self, spec: &SigmaSpec) -> Result<PopulationSpectrum> {
        match spec {
            SigmaSpec::Atoms { population } => Ok(population.clone()),
            SigmaSpec::ToeplitzAr { .. } => PopulationSpectrum::from_eigenvalues(&self.eigenvalues),
        }
    }

    /// `Σ v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match (&self.diag, &self.dense) {
            (Some(d), _) => d.iter().zip(v).map(|(a, b)| a * b).collect(),
            (None, Some((s, _))) => (0..self.p).map(|i| (0..self.p).map(|j| s[(i, j)] * v[j]).sum()).collect(),
            _ => unreachable!("covariance is either diagonal or dense"),
        }
    }

    /// `vᵀ Σ v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `Σ^{1/2} Z`.
    pub fn apply_sqrt(&self, z: Mat<f64>) -> Mat<f64> {
        match (&self.diag, &self.dense) {
            (Some(d), _) => {
                let mut z = z;
                for i in 0..self.p {
                    let s = d[i].sqrt();
                    for j in 0..z.ncols() {
                        z[(i, j)] *= s;
                    }
                }
                z
            }
            (None, Some((_, root))) => root * &z,
            _ => unreachable!("covariance is either diagonal or dense"),
        }
    }

    /// Dense `Σ` as a matrix.
    pub fn to_mat(&self) -> Mat<f64> {
        match (&self.diag, &self.dense) {
            (Some(d), _) => Mat::from_fn(self.p, self.p, |i, j| if i == j { d[i] } else { 0.0 }),
            (None, Some((s, _))) => s.clone(),
            _ => unreachable!("covariance is either diagonal or dense"),
        }
    }

    /// `p⁻¹ tr(Σ²)`.
    pub fn normalized_trace_sq(&self) -> f64 {
        self.eigenvalues.iter().map(|t| t * t).sum::<f64>() / self.p as f64
    }
}

/// One realization of a simulated data set.
#[derive(Debug, Clone)]
pub struct SimulationDraw {
    /// `p × n` data matrix, one observation per column.
    pub x: Mat<f64>,
    /// `w` (regression) or `δ` (LDA), equal to `alpha · signal_unit`.
    pub signal: Vec<f64>,
    /// Signal direction drawn with variance `1/p` per coordinate.
    pub signal_unit: Vec<f64>,
    /// Regression noise `ε`; empty for LDA.
    pub noise: Vec<f64>,
    /// Regression responses; empty for LDA.
    pub y: Vec<f64>,
    /// Class labels `±1`; empty for regression.
    pub labels: Vec<f64>,
    pub alpha: f64,
}

fn standard_matrix(rng: &mut ChaCha8Rng, p: usize, n: usize, dist: ZDist) -> Mat<f64> {
    // Column-major fill keeps the stream order independent of faer internals.
    let mut z = Mat::<f64>::zeros(p, n);
    for j in 0..n {
        for i in 0..p {
            z[(i, j)] = match dist {
                ZDist::Gaussian => rng.sample(StandardNormal),
                ZDist::Rademacher => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
        }
    }
    z
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, sd: f64) -> Vec<f64> {
    (0..len).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Regression draw `y_i = wᵀx_i + ε_i`, `x_i = Σ^{1/2} z_i`,
/// `w ~ N(0, α²/p I)`, `ε ~ N(0, I)`.
pub fn generate_regression_draw(config: &ExperimentConfig, cov: &Covariance, replicate: usize) -> Result<SimulationDraw> {
    config.validate()?;
    check_dim(config, cov)?;
    let (p, n) = (config.p, config.n);
    let mut rng = config.rng(replicate);
    let z = standard_matrix(&mut rng, p, n, config.z_dist);
    let signal_unit = gaussian_vec(&mut rng, p, 1.0 / (p as f64).sqrt());
    let noise = gaussian_vec(&mut rng, n, 1.0);
    let x = cov.apply_sqrt(z);
    let signal: Vec<f64> = signal_unit.iter().map(|v| config.alpha * v).collect();
    let y = (0..n).map(|j| (0..p).map(|i| x[(i, j)] * signal[i]).sum::<f64>() + noise[j]).collect();
    Ok(SimulationDraw { x, signal, signal_unit, noise, y, labels: Vec::new(), alpha: config.alpha })
}

/// LDA draw `x_i = Σ^{1/2} z_i + y_i δ` with the first `n/2` labels `+1`,
/// `δ ~ N(0, α²/p I)`.
pub fn generate_lda_draw(config: &ExperimentConfig, cov: &Covariance, replicate: usize) -> Result<SimulationDraw> {
    config.validate()?;
    check_dim(config, cov)?;
    if config.n % 2 != 0 {
        return Err(Error::Config(format!("LDA needs an even sample count, got n = {}", config.n)));
    }
    if config.z_dist != ZDist::Gaussian {
        return Err(Error::Config("the LDA model needs Gaussian classes".into()));
    }
    let (p, n) = (config.p, config.n);
    let mut rng = config.rng(replicate);
    let z = standard_matrix(&mut rng, p, n, ZDist::Gaussian);
    let signal_unit = gaussian_vec(&mut rng, p, 1.0 / (p as f64).sqrt());
    let signal: Vec<f64> = signal_unit.iter().map(|v| config.alpha * v).collect();
    let labels: Vec<f64> = (0..n).map(|j| if j < n / 2 { 1.0 } else { -1.0 }).collect();
    let mut x = cov.apply_sqrt(z);
    for j in 0..n {
        for i in 0..p {
            x[(i, j)] += labels[j] * signal[i];
        }
    }
    Ok(SimulationDraw { x, signal, signal_unit, noise: Vec::new(), y: Vec::new(), labels, alpha: config.alpha })
}

fn check_dim(config: &ExperimentConfig, cov: &Covariance) -> Result<()> {
    if cov.dim() != config.p {
        return Err(Error::Config(format!("covariance has dimension {} but p = {}", cov.dim(), config.p)));
    }
    Ok(())
}
