//! Python bindings for `shrinkage_core`.
//!
//! Shrinkers are passed as dicts (or JSON strings) in the same tagged form the
//! CLI accepts, e.g. `{"family": "ridge", "lambda": 0.3}`. Structured results
//! come back as plain dicts.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

use shrinkage_core::functionals::{self, companion_boundary, ShrinkageFunction};
use shrinkage_core::lda::{self, LdaModelParams};
use shrinkage_core::montecarlo::{self, Covariance, ExperimentConfig, SampleEigen, SigmaSpec, ZDist};
use shrinkage_core::regression::{self, RegressionModelParams};
use shrinkage_core::spectrum::Atom;
use shrinkage_core::{AspectRatio, Error, LimitingSpectrum, PopulationSpectrum};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Json(_) | Error::Evaluation(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for shrinkage_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py(py: Python<'_>, value: &impl Serialize) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import_bound("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn shrinker(obj: &Bound<'_, PyAny>) -> PyResult<ShrinkageFunction> {
    from_py(obj)
}

/// Accepts a list of eigenvalues (equal weights) or of `(t, w)` pairs.
fn population(obj: &Bound<'_, PyAny>) -> PyResult<PopulationSpectrum> {
    if let Ok(locs) = obj.extract::<Vec<f64>>() {
        return PopulationSpectrum::from_eigenvalues(&locs).py();
    }
    let pairs: Vec<(f64, f64)> = obj
        .extract()
        .map_err(|_| PyValueError::new_err("population must be a list of eigenvalues or of (t, w) pairs"))?;
    PopulationSpectrum::new(pairs.into_iter().map(|(t, w)| Atom { t, w }).collect()).py()
}

/// Limiting spectral distribution of `S_n` for a population spectrum and
/// aspect ratio `γ = p/n`, tabulated on a quadrature grid.
#[pyclass(name = "Spectrum", module = "shrinkage_lab", frozen)]
struct PySpectrum {
    inner: LimitingSpectrum,
}

#[pymethods]
impl PySpectrum {
    #[new]
    #[pyo3(signature = (population, gamma, grid_size = 512))]
    fn new(population: &Bound<'_, PyAny>, gamma: f64, grid_size: usize) -> PyResult<Self> {
        let h = self::population(population)?;
        let inner = LimitingSpectrum::build(&h, AspectRatio::new(gamma).py()?, grid_size).py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma().value()
    }

    #[getter]
    fn population(&self) -> Vec<(f64, f64)> {
        self.inner.population().atoms().iter().map(|a| (a.t, a.w)).collect()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid().to_vec()
    }

    #[getter]
    fn density(&self) -> Vec<f64> {
        self.inner.density_vals().to_vec()
    }

    #[getter]
    fn f(&self) -> Vec<f64> {
        self.inner.f_vals().to_vec()
    }

    #[getter]
    fn g(&self) -> Vec<f64> {
        self.inner.g_vals().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn support(&self) -> Vec<(f64, f64)> {
        self.inner.support().iter().map(|iv| (iv.lo, iv.hi)).collect()
    }

    #[getter]
    fn atom0_mass(&self) -> f64 {
        self.inner.atom0_mass()
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn first_moment(&self) -> f64 {
        self.inner.first_moment()
    }

    /// Companion transform `m̲(x + i0)` at a point of the support.
    fn boundary(&self, x: f64) -> PyResult<Complex64> {
        companion_boundary(&self.inner, x).py()
    }

    fn summary(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.inner.summary())
    }

    /// Values of a shrinker at the grid nodes and at zero.
    fn tabulate(&self, h: &Bound<'_, PyAny>) -> PyResult<(Vec<f64>, f64)> {
        shrinker(h)?.tabulate(&self.inner).py()
    }

    /// Limit of `p⁻¹ tr(Σ h(S_n))`.
    fn m(&self, h: &Bound<'_, PyAny>) -> PyResult<f64> {
        Ok(functionals::m_functional(&self.inner, &shrinker(h)?).py()?.value)
    }

    /// Limit of `p⁻¹ tr(Σ h(S_n) Σ h(S_n))`.
    fn t(&self, h: &Bound<'_, PyAny>) -> PyResult<f64> {
        Ok(functionals::t_functional(&self.inner, &shrinker(h)?).py()?.value)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum(gamma={}, atoms={}, nodes={}, intervals={})",
            self.inner.gamma().value(),
            self.inner.population().atoms().len(),
            self.inner.len(),
            self.inner.support().len()
        )
    }
}

fn regression_params(spec: &PySpectrum, alpha: f64) -> PyResult<RegressionModelParams> {
    RegressionModelParams::new(alpha, spec.inner.gamma(), spec.inner.population().clone()).py()
}

fn lda_params(spec: &PySpectrum, alpha: f64) -> PyResult<LdaModelParams> {
    LdaModelParams::new(alpha, spec.inner.gamma(), spec.inner.population().clone()).py()
}

/// Limiting regression test risk of a shrinker, with its components.
#[pyfunction]
fn predicted_test_risk(py: Python<'_>, spec: &PySpectrum, alpha: f64, h: &Bound<'_, PyAny>) -> PyResult<PyObject> {
    let report = regression::predicted_test_risk(&regression_params(spec, alpha)?, &spec.inner, &shrinker(h)?).py()?;
    to_py(py, &report)
}

/// Test risk and training error of gradient flow along `times`.
#[pyfunction]
#[pyo3(signature = (spec, alpha, times, lambda_ = 0.0))]
fn learning_curve(py: Python<'_>, spec: &PySpectrum, alpha: f64, times: Vec<f64>, lambda_: f64) -> PyResult<PyObject> {
    let curve = regression::learning_curve(&regression_params(spec, alpha)?, &spec.inner, lambda_, &times).py()?;
    to_py(py, &curve)
}

/// Limiting LDA error of a shrinker.
#[pyfunction]
fn lda_error(py: Python<'_>, spec: &PySpectrum, alpha: f64, h: &Bound<'_, PyAny>) -> PyResult<PyObject> {
    to_py(py, &lda::theta(&lda_params(spec, alpha)?, &spec.inner, &shrinker(h)?).py()?)
}

/// Error-minimizing nonnegative LDA shrinker on the spectrum grid.
#[pyfunction]
fn optimal_shrinkage(py: Python<'_>, spec: &PySpectrum, alpha: f64) -> PyResult<PyObject> {
    let params = lda_params(spec, alpha)?;
    let sol = lda::optimal_shrinkage_qp(&params, &spec.inner).py()?;
    let report = lda::theta(&params, &spec.inner, &sol.h_opt).py()?;
    let out = serde_json::json!({ "solution": sol, "report": report });
    to_py(py, &out)
}

/// Limiting LDA errors of the reference shrinkers at each signal strength.
#[pyfunction]
fn compare_shrinkers(py: Python<'_>, spec: &PySpectrum, alphas: Vec<f64>) -> PyResult<PyObject> {
    let params = lda_params(spec, alphas.first().copied().unwrap_or(1.0))?;
    to_py(py, &lda::compare_shrinkers(&params, &spec.inner, &alphas).py()?)
}

fn experiment(p: usize, n: usize, alpha: f64, h: PopulationSpectrum, replicates: usize, seed: u64) -> PyResult<(ExperimentConfig, Covariance)> {
    let sigma = SigmaSpec::Atoms { population: h };
    let config = ExperimentConfig { p, n, alpha, sigma, z_dist: ZDist::Gaussian, seed, replicates };
    config.validate().py()?;
    let cov = Covariance::build(&config.sigma, p).py()?;
    Ok((config, cov))
}

/// Eigenvalues of one simulated sample covariance with a diagonal population.
#[pyfunction]
#[pyo3(signature = (p, n, population, seed = 0, replicate = 0))]
fn sample_eigenvalues(p: usize, n: usize, population: &Bound<'_, PyAny>, seed: u64, replicate: usize) -> PyResult<Vec<f64>> {
    let (config, cov) = experiment(p, n, 0.0, self::population(population)?, replicate + 1, seed)?;
    let draw = montecarlo::generate_regression_draw(&config, &cov, replicate).py()?;
    Ok(SampleEigen::from_data(&draw.x).py()?.lambda)
}

/// Empirical regression test risks over simulated replicates, one column per
/// shrinker, with `mean` and `se` per shrinker.
#[pyfunction]
#[pyo3(signature = (p, n, population, alpha, shrinkers, replicates = 20, seed = 0, grid_size = 512))]
#[allow(clippy::too_many_arguments)]
fn simulate_regression(
    py: Python<'_>,
    p: usize,
    n: usize,
    population: &Bound<'_, PyAny>,
    alpha: f64,
    shrinkers: Vec<Bound<'_, PyAny>>,
    replicates: usize,
    seed: u64,
    grid_size: usize,
) -> PyResult<PyObject> {
    let h = self::population(population)?;
    let spec = LimitingSpectrum::build(&h, AspectRatio::from_dims(p, n).py()?, grid_size).py()?;
    let (config, cov) = experiment(p, n, alpha, h, replicates, seed)?;
    let evals = shrinkers.iter().map(|s| shrinker(s)?.evaluator(&spec).py()).collect::<PyResult<Vec<_>>>()?;
    let labels: Vec<f64> = (0..evals.len()).map(|k| k as f64).collect();
    let curve = py.allow_threads(|| montecarlo::run_regression_curve(&config, &cov, &labels, &evals)).py()?;
    let summaries: Vec<_> = (0..evals.len()).map(|k| curve.test_summary(k)).collect();
    to_py(py, &serde_json::json!({ "test": curve.test, "train": curve.train, "summary": summaries }))
}

/// Empirical conditional LDA errors of one shrinker at several signal strengths.
#[pyfunction]
#[pyo3(signature = (p, n, population, alphas, h, replicates = 20, seed = 0, grid_size = 512))]
#[allow(clippy::too_many_arguments)]
fn simulate_lda(
    py: Python<'_>,
    p: usize,
    n: usize,
    population: &Bound<'_, PyAny>,
    alphas: Vec<f64>,
    h: &Bound<'_, PyAny>,
    replicates: usize,
    seed: u64,
    grid_size: usize,
) -> PyResult<PyObject> {
    let pop = self::population(population)?;
    let spec = LimitingSpectrum::build(&pop, AspectRatio::from_dims(p, n).py()?, grid_size).py()?;
    let (config, cov) = experiment(p, n, alphas.first().copied().unwrap_or(1.0), pop, replicates, seed)?;
    let ev = shrinker(h)?.evaluator(&spec).py()?;
    let points: Vec<_> = alphas.iter().map(|&a| (a, ev.clone())).collect();
    let out = py.allow_threads(|| montecarlo::run_lda_errors(&config, &cov, &points)).py()?;
    let summaries: Vec<_> = (0..alphas.len()).map(|k| out.summary(k)).collect();
    to_py(py, &serde_json::json!({ "alphas": out.alphas, "errors": out.errors, "degenerate": out.degenerate, "summary": summaries }))
}

/// Kernel estimates of the boundary values `f`, `g` from sample eigenvalues.
#[pyfunction]
#[pyo3(signature = (eigenvalues, gamma, bandwidth = None, grid = None))]
fn kernel_estimate(py: Python<'_>, eigenvalues: Vec<f64>, gamma: f64, bandwidth: Option<f64>, grid: Option<Vec<f64>>) -> PyResult<PyObject> {
    let est = montecarlo::kernel_estimate_fg(&eigenvalues, gamma, bandwidth, grid.as_deref()).py()?;
    to_py(py, &est)
}

/// Tags of the closed-form shrinker families.
#[pyfunction]
fn shrinker_families() -> Vec<&'static str> {
    vec![
        "ridge",
        "gradient_flow",
        "pseudo_inverse",
        "ridge_inverse",
        "identity",
        "constant",
        "exponential",
        "polynomial",
        "lp_covariance",
        "lp_precision",
        "mean_shrinker",
    ]
}

#[pymodule]
fn shrinkage_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectrum>()?;
    m.add_function(wrap_pyfunction!(predicted_test_risk, m)?)?;
    m.add_function(wrap_pyfunction!(learning_curve, m)?)?;
    m.add_function(wrap_pyfunction!(lda_error, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_shrinkage, m)?)?;
    m.add_function(wrap_pyfunction!(compare_shrinkers, m)?)?;
    m.add_function(wrap_pyfunction!(sample_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_regression, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lda, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(shrinker_families, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
