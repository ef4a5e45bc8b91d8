//! JSON-configured command-line runs.
//!
//! A run is `shrinkage-lab [COMMAND] --config run.json --set key=value ...`.
//! The command may also be given as a `"command"` key of the config. Every
//! artifact written to `--output PATH` is accompanied by
//! `PATH.config.json`, the fully resolved configuration; passing that file
//! back as `--config` reproduces the artifact.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::functionals::{lp_precision_shrinker, Evaluator, ShrinkageFunction};
use crate::lda::{
    best_ridge, compare_shrinkers, covariance_shrinker_inverse, optimal_shrinkage_qp, relaxed_optimum, theta,
    write_comparison_csv, LdaModelParams,
};
use crate::montecarlo::{
    kernel_estimate_fg, run_lda_errors, run_regression_curve, Covariance, ExperimentConfig, SampleEigen, SigmaSpec,
    ZDist,
};
use crate::regression::{gd_shrinkage, learning_curve, risk_surface, write_surface_csv, RegressionModelParams};
use crate::spectrum::{AspectRatio, LimitingSpectrum, PopulationSpectrum};

pub const USAGE: &str = "\
usage: shrinkage-lab [COMMAND] --config FILE [--set KEY=VALUE]... [--output PATH] [--format csv|json] [--threads N]

commands:
  spectrum            limiting spectral density and boundary values f, g
  regression-curve    predicted (and simulated) gradient-flow test risk over t
  risk-surface        predicted test risk over a (t, lambda) grid
  training-curve      predicted (and simulated) training error over t
  lda-error           predicted (and simulated) LDA error of a shrinker over alpha
  optimal-shrinkage   optimal LDA shrinkage from the quadratic program
  compare-shrinkers   LDA error of the standard shrinkers over alpha
  simulate            raw Monte Carlo replicates for regression or LDA
  estimate-spectrum   kernel estimates of f, g from one simulated sample

The config is one JSON object; --set overrides its top-level keys, with
VALUE parsed as JSON when possible. Exit status: 0 ok, 2 config error,
3 numerical failure.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "shrinkage-lab", about = "Asymptotic and simulated risk of spectral shrinkage estimators")]
pub struct Args {
    /// Command name; defaults to the config's "command" key.
    pub command: Option<String>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a top-level config key, e.g. --set alpha=2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Artifact path; stdout when omitted (no sidecar is written then).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker thread cap.
    #[arg(long, env = "SHRINKAGE_LAB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    RegressionCurve,
    RiskSurface,
    TrainingCurve,
    LdaError,
    OptimalShrinkage,
    CompareShrinkers,
    Simulate,
    EstimateSpectrum,
}

impl Command {
    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(Value::String(name.to_string()))
            .map_err(|_| Error::Config(format!("unknown command `{name}`")))
    }

    pub fn name(self) -> String {
        match serde_json::to_value(self) {
            Ok(Value::String(s)) => s,
            _ => unreachable!("commands serialize to strings"),
        }
    }
}

/// A validated invocation.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: Command,
    pub params: Map<String, Value>,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

/// Outcome of parsing the command line before any computation.
pub enum Parsed {
    Run(RunSpec),
    /// Nothing to run: print usage.
    Usage,
}

/// Reads the config, applies overrides and resolves the command.
pub fn resolve(args: &Args) -> Result<Parsed> {
    let mut params = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            if text.trim().is_empty() {
                Map::new()
            } else {
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Error::Config("config must be a JSON object".into())),
                    Err(e) => return Err(Error::Config(format!("config is not valid JSON: {e}"))),
                }
            }
        }
        None => Map::new(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        params.insert(k.trim().to_string(), value);
    }
    let from_config = params.remove("command");
    let name = match (&args.command, from_config) {
        (Some(c), Some(Value::String(k))) if *c != k => {
            return Err(Error::Config(format!("command `{c}` conflicts with config command `{k}`")))
        }
        (Some(c), _) => Some(c.clone()),
        (None, Some(Value::String(k))) => Some(k),
        (None, Some(_)) => return Err(Error::Config("\"command\" must be a string".into())),
        (None, None) => None,
    };
    let Some(name) = name else { return Ok(Parsed::Usage) };
    if params.is_empty() {
        return Ok(Parsed::Usage);
    }
    if let (Some(out), Some(cfg)) = (&args.output, &args.config) {
        if same_file(out, cfg) || same_file(&sidecar_path(out), cfg) {
            return Err(Error::Config("output would overwrite the input config".into()));
        }
    }
    Ok(Parsed::Run(RunSpec { command: Command::parse(&name)?, params, output_path: args.output.clone(), format: args.format }))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// Entry point of the binary: returns the process exit status.
pub fn main_with_args(args: Args) -> i32 {
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let outcome = resolve(&args).and_then(|parsed| match parsed {
        Parsed::Usage => Ok(false),
        Parsed::Run(spec) => run(&spec).map(|_| true),
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("{USAGE}");
            2
        }
        Err(e) => {
            let kind = match e {
                Error::Config(_) | Error::Json(_) => "config",
                Error::Domain(_) => "domain",
                Error::Convergence { .. } => "convergence",
                Error::Evaluation(_) => "evaluation",
                Error::Numerical(_) => "numerical",
                Error::Io(_) => "io",
            };
            let line = serde_json::json!({ "error": kind, "message": e.to_string() });
            eprintln!("{line}");
            e.exit_code()
        }
    }
}

fn parse_params<T: DeserializeOwned>(params: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| Error::Config(e.to_string()))
}

/// Executes a run and writes its artifact and sidecar.
pub fn run(spec: &RunSpec) -> Result<()> {
    log::info!("running {}", spec.command.name());
    let (body, resolved) = match spec.command {
        Command::Spectrum => execute::<SpectrumParams>(spec, spectrum_cmd)?,
        Command::RegressionCurve => execute::<CurveParams>(spec, |p, f| curve_cmd(p, f, false))?,
        Command::TrainingCurve => execute::<CurveParams>(spec, |p, f| curve_cmd(p, f, true))?,
        Command::RiskSurface => execute::<SurfaceParams>(spec, surface_cmd)?,
        Command::LdaError => execute::<LdaErrorParams>(spec, lda_error_cmd)?,
        Command::OptimalShrinkage => execute::<OptimalParams>(spec, optimal_cmd)?,
        Command::CompareShrinkers => execute::<CompareParams>(spec, compare_cmd)?,
        Command::Simulate => execute::<SimulateParams>(spec, simulate_cmd)?,
        Command::EstimateSpectrum => execute::<EstimateParams>(spec, estimate_cmd)?,
    };
    match &spec.output_path {
        Some(path) => {
            fs::write(path, &body)?;
            let mut side = match resolved {
                Value::Object(m) => m,
                _ => unreachable!("parameter structs serialize to objects"),
            };
            side.insert("command".into(), Value::String(spec.command.name()));
            let text = serde_json::to_string_pretty(&Value::Object(side))?;
            fs::write(sidecar_path(path), text + "\n")?;
            log::info!("wrote {} and its sidecar config", path.display());
        }
        None => io::stdout().write_all(&body)?,
    }
    Ok(())
}

fn execute<T: DeserializeOwned + Serialize>(
    spec: &RunSpec,
    body: impl FnOnce(&T, Format) -> Result<Vec<u8>>,
) -> Result<(Vec<u8>, Value)> {
    let params: T = parse_params(&spec.params)?;
    let resolved = serde_json::to_value(&params)?;
    let known = resolved.as_object().expect("parameter structs serialize to objects");
    if let Some(k) = spec.params.iter().find(|(k, v)| !v.is_null() && !known.contains_key(*k)).map(|(k, _)| k) {
        return Err(Error::Config(format!("unknown key `{k}` for {}", spec.command.name())));
    }
    Ok((body(&params, spec.format)?, resolved))
}

/// Population given as a list of equally weighted locations or as atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationInput {
    Locations(Vec<f64>),
    Spectrum(PopulationSpectrum),
}

impl PopulationInput {
    fn resolve(&self) -> Result<PopulationSpectrum> {
        match self {
            PopulationInput::Locations(l) => PopulationSpectrum::uniform(l),
            PopulationInput::Spectrum(s) => Ok(s.clone()),
        }
    }
}

/// `(γ, H)` from the keys shared by all commands: `gamma` or `p`/`n`, and
/// `population` or `sigma` (the latter needs `p`). Flattened into the
/// command structs, so unknown keys are caught by [`execute`] instead of
/// serde.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Design {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    population: Option<PopulationInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<SigmaSpec>,
}

impl Design {
    fn gamma(&self) -> Result<AspectRatio> {
        match (self.gamma, self.p, self.n) {
            (Some(g), Some(p), Some(n)) => {
                let from_dims = p as f64 / n as f64;
                if (g - from_dims).abs() > 1e-12 * g {
                    return Err(Error::Config(format!("gamma = {g} disagrees with p/n = {from_dims}")));
                }
                AspectRatio::new(g)
            }
            (Some(g), _, _) => AspectRatio::new(g),
            (None, Some(p), Some(n)) => AspectRatio::from_dims(p, n),
            _ => Err(Error::Config("missing key: gamma (or both p and n)".into())),
        }
    }

    fn sigma(&self) -> Result<SigmaSpec> {
        match (&self.population, &self.sigma) {
            (Some(_), Some(_)) => Err(Error::Config("give either population or sigma, not both".into())),
            (Some(pop), None) => Ok(SigmaSpec::Atoms { population: pop.resolve()? }),
            (None, Some(s)) => Ok(s.clone()),
            (None, None) => Err(Error::Config("missing key: population (or sigma)".into())),
        }
    }

    /// Population spectrum and, when `p` is known, the covariance.
    fn population(&self) -> Result<(PopulationSpectrum, Option<Covariance>)> {
        let sigma = self.sigma()?;
        match (&sigma, self.p) {
            (SigmaSpec::Atoms { population }, None) => Ok((population.clone(), None)),
            (_, Some(p)) => {
                log::info!("building covariance of dimension {p}");
                let cov = Covariance::build(&sigma, p)?;
                Ok((cov.population(&sigma)?, Some(cov)))
            }
            (SigmaSpec::ToeplitzAr { .. }, None) => Err(Error::Config("sigma = toeplitz_ar needs p".into())),
        }
    }

    fn experiment(&self, alpha: f64, sim: &Simulation) -> Result<ExperimentConfig> {
        let (Some(p), Some(n)) = (self.p, self.n) else {
            return Err(Error::Config("simulation needs p and n".into()));
        };
        let config = ExperimentConfig {
            p,
            n,
            alpha,
            sigma: self.sigma()?,
            z_dist: sim.z_dist,
            seed: sim.seed,
            replicates: sim.replicates.max(1),
        };
        config.validate()?;
        Ok(config)
    }
}

fn build_spectrum(design: &Design, grid_size: usize) -> Result<(LimitingSpectrum, PopulationSpectrum, Option<Covariance>)> {
    let gamma = design.gamma()?;
    let (population, cov) = design.population()?;
    log::info!("solving the limiting spectrum (γ = {}, {} atoms)", gamma.value(), population.atoms().len());
    let spec = LimitingSpectrum::build(&population, gamma, grid_size)?;
    Ok((spec, population, cov))
}

fn default_grid() -> usize {
    512
}

/// Monte Carlo settings; `replicates = 0` skips simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Simulation {
    #[serde(default)]
    replicates: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    z_dist: ZDist,
}

/// Times given explicitly or as `{lo, hi, count}` log-spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Grid1d {
    List(Vec<f64>),
    LogSpaced { lo: f64, hi: f64, count: usize },
}

impl Grid1d {
    fn values(&self) -> Result<Vec<f64>> {
        match *self {
            Grid1d::List(ref v) if !v.is_empty() => Ok(v.clone()),
            Grid1d::List(_) => Err(Error::Config("empty grid".into())),
            Grid1d::LogSpaced { lo, hi, count } => {
                if !(lo > 0.0 && hi > lo && count >= 2) {
                    return Err(Error::Config(format!("bad log grid lo = {lo}, hi = {hi}, count = {count}")));
                }
                Ok(crate::util::log_space(lo, hi, count))
            }
        }
    }
}

fn csv_or_json<T: Serialize>(format: Format, value: &T, csv: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        Format::Csv => csv(&mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, value)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpectrumParams {
    #[serde(flatten)]
    design: Design,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn spectrum_cmd(p: &SpectrumParams, format: Format) -> Result<Vec<u8>> {
    let (spec, _, _) = build_spectrum(&p.design.clone(), p.grid_size)?;
    #[derive(Serialize)]
    struct Out<'a> {
        summary: crate::spectrum::SpectrumSummary,
        x: &'a [f64],
        f: &'a [f64],
        g: &'a [f64],
        density: &'a [f64],
    }
    let out = Out { summary: spec.summary(), x: spec.grid(), f: spec.f_vals(), g: spec.g_vals(), density: spec.density_vals() };
    csv_or_json(format, &out, |w| spec.write_csv(w))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CurveParams {
    #[serde(flatten)]
    design: Design,
    alpha: f64,
    #[serde(default)]
    lambda: f64,
    times: Grid1d,
    #[serde(flatten)]
    simulation: Simulation,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

#[derive(Serialize)]
struct CurveRow {
    t: f64,
    predicted: f64,
    empirical_mean: Option<f64>,
    empirical_se: Option<f64>,
}

fn curve_cmd(p: &CurveParams, format: Format, training: bool) -> Result<Vec<u8>> {
    let design = p.design.clone();
    let times = p.times.values()?;
    let (spec, population, cov) = build_spectrum(&design, p.grid_size)?;
    let params = RegressionModelParams::new(p.alpha, design.gamma()?, population)?;
    log::info!("evaluating the predicted curve at {} times", times.len());
    let curve = learning_curve(&params, &spec, p.lambda, &times)?;
    let predicted = if training { &curve.train_error } else { &curve.test_risk };
    let sim = p.simulation.clone();
    let empirical = if sim.replicates > 0 {
        let config = design.experiment(p.alpha, &sim)?;
        let cov = match cov {
            Some(c) => c,
            None => Covariance::build(&config.sigma, config.p)?,
        };
        let shrinkers = times
            .iter()
            .map(|&t| gd_shrinkage(t, p.lambda).evaluator(&spec))
            .collect::<Result<Vec<Evaluator>>>()?;
        log::info!("simulating {} replicates (p = {}, n = {})", config.replicates, config.p, config.n);
        let mc = run_regression_curve(&config, &cov, &times, &shrinkers)?;
        Some(
            (0..times.len())
                .map(|k| if training { mc.train_summary(k) } else { mc.test_summary(k) })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let rows: Vec<CurveRow> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| CurveRow {
            t,
            predicted: predicted[k],
            empirical_mean: empirical.as_ref().map(|e| e[k].mean),
            empirical_se: empirical.as_ref().map(|e| e[k].se),
        })
        .collect();
    let name = if training { "predicted_train_error" } else { "predicted_risk" };
    csv_or_json(format, &rows, |w| {
        writeln!(w, "t,{name},empirical_mean,empirical_se")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", r.t, r.predicted, opt(r.empirical_mean), opt(r.empirical_se))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SurfaceParams {
    #[serde(flatten)]
    design: Design,
    alpha: f64,
    times: Grid1d,
    lambdas: Grid1d,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn surface_cmd(p: &SurfaceParams, format: Format) -> Result<Vec<u8>> {
    let design = p.design.clone();
    let (spec, population, _) = build_spectrum(&design, p.grid_size)?;
    let params = RegressionModelParams::new(p.alpha, design.gamma()?, population)?;
    let points = risk_surface(&params, &spec, &p.lambdas.values()?, &p.times.values()?)?;
    csv_or_json(format, &points, |w| write_surface_csv(&points, w))
}

/// LDA shrinker: a function, or one of `optimal`, `lp_covariance_inverse`,
/// `lp_precision`, `best_ridge`, recomputed per `α` where relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum LdaShrinker {
    Named(String),
    Function(ShrinkageFunction),
}

impl LdaShrinker {
    fn at(&self, params: &LdaModelParams, spec: &LimitingSpectrum) -> Result<ShrinkageFunction> {
        match self {
            LdaShrinker::Function(f) => Ok(f.clone()),
            LdaShrinker::Named(name) => match name.as_str() {
                "optimal" => Ok(optimal_shrinkage_qp(params, spec)?.h_opt),
                "lp_covariance_inverse" => Ok(covariance_shrinker_inverse(spec)),
                "lp_precision" => lp_precision_shrinker(spec),
                "best_ridge" => {
                    let scale = spec.support().last().map_or(1.0, |iv| iv.hi);
                    let (lambda, _) = best_ridge(params, spec, 1e-6 * scale, 1e3 * scale)?;
                    Ok(crate::functionals::Family::RidgeInverse { lambda }.into())
                }
                other => Err(Error::Config(format!("unknown LDA shrinker `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LdaErrorParams {
    #[serde(flatten)]
    design: Design,
    alphas: Vec<f64>,
    shrinker: LdaShrinker,
    #[serde(flatten)]
    simulation: Simulation,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

#[derive(Serialize)]
struct LdaRow {
    alpha: f64,
    theta: f64,
    predicted_error: f64,
    empirical_mean: Option<f64>,
    empirical_se: Option<f64>,
}

fn lda_error_cmd(p: &LdaErrorParams, format: Format) -> Result<Vec<u8>> {
    if p.alphas.is_empty() {
        return Err(Error::Config("alphas must not be empty".into()));
    }
    let design = p.design.clone();
    let (spec, population, cov) = build_spectrum(&design, p.grid_size)?;
    let base = LdaModelParams::new(p.alphas[0], design.gamma()?, population)?;
    let mut shrinkers = Vec::with_capacity(p.alphas.len());
    let mut reports = Vec::with_capacity(p.alphas.len());
    for &alpha in &p.alphas {
        let params = base.with_alpha(alpha)?;
        let h = p.shrinker.at(&params, &spec)?;
        reports.push(theta(&params, &spec, &h)?);
        shrinkers.push(h);
    }
    let sim = p.simulation.clone();
    let empirical = if sim.replicates > 0 {
        let config = design.experiment(p.alphas[0], &sim)?;
        let cov = match cov {
            Some(c) => c,
            None => Covariance::build(&config.sigma, config.p)?,
        };
        let points = p
            .alphas
            .iter()
            .zip(&shrinkers)
            .map(|(&a, h)| Ok((a, h.evaluator(&spec)?)))
            .collect::<Result<Vec<_>>>()?;
        log::info!("simulating {} LDA replicates (p = {}, n = {})", config.replicates, config.p, config.n);
        let mc = run_lda_errors(&config, &cov, &points)?;
        Some((0..points.len()).map(|k| mc.summary(k)).collect::<Vec<_>>())
    } else {
        None
    };
    let rows: Vec<LdaRow> = p
        .alphas
        .iter()
        .enumerate()
        .map(|(k, &alpha)| LdaRow {
            alpha,
            theta: reports[k].theta,
            predicted_error: reports[k].error,
            empirical_mean: empirical.as_ref().map(|e| e[k].mean),
            empirical_se: empirical.as_ref().map(|e| e[k].se),
        })
        .collect();
    csv_or_json(format, &rows, |w| {
        writeln!(w, "alpha,theta,predicted_error,empirical_mean,empirical_se")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.alpha, r.theta, r.predicted_error, opt(r.empirical_mean), opt(r.empirical_se))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimalParams {
    #[serde(flatten)]
    design: Design,
    alpha: f64,
    /// Solve the relaxation (`γ < 1` only) instead of the full program.
    #[serde(default)]
    relaxed: bool,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn optimal_cmd(p: &OptimalParams, format: Format) -> Result<Vec<u8>> {
    let design = p.design.clone();
    let (spec, population, _) = build_spectrum(&design, p.grid_size)?;
    let params = LdaModelParams::new(p.alpha, design.gamma()?, population)?;
    log::info!("solving the shrinkage quadratic program on {} nodes", spec.len());
    let sol = if p.relaxed { relaxed_optimum(&params, &spec)? } else { optimal_shrinkage_qp(&params, &spec)? };
    let report = theta(&params, &spec, &sol.h_opt)?;
    #[derive(Serialize)]
    struct Out<'a> {
        x: &'a [f64],
        solution: &'a crate::lda::QpSolution,
        theta: f64,
        error: f64,
    }
    let out = Out { x: spec.grid(), solution: &sol, theta: report.theta, error: report.error };
    csv_or_json(format, &out, |w| sol.write_csv(&spec, w))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompareParams {
    #[serde(flatten)]
    design: Design,
    alphas: Vec<f64>,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn compare_cmd(p: &CompareParams, format: Format) -> Result<Vec<u8>> {
    if p.alphas.is_empty() {
        return Err(Error::Config("alphas must not be empty".into()));
    }
    let design = p.design.clone();
    let (spec, population, _) = build_spectrum(&design, p.grid_size)?;
    let params = LdaModelParams::new(p.alphas[0], design.gamma()?, population)?;
    log::info!("comparing shrinkers at {} signal strengths", p.alphas.len());
    let rows = compare_shrinkers(&params, &spec, &p.alphas)?;
    csv_or_json(format, &rows, |w| write_comparison_csv(&rows, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Model {
    Regression,
    Lda,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimulateParams {
    model: Model,
    p: usize,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    population: Option<PopulationInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<SigmaSpec>,
    /// Regression: the signal strength. LDA: the first of `alphas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alphas: Option<Vec<f64>>,
    /// Regression shrinkers, labelled by position in the output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shrinkers: Option<Vec<ShrinkageFunction>>,
    /// LDA shrinker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shrinker: Option<LdaShrinker>,
    replicates: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    z_dist: ZDist,
    #[serde(default = "default_grid")]
    grid_size: usize,
}

fn simulate_cmd(p: &SimulateParams, format: Format) -> Result<Vec<u8>> {
    if p.replicates == 0 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    let design = Design { gamma: None, p: Some(p.p), n: Some(p.n), population: p.population.clone(), sigma: p.sigma.clone() };
    let sim = Simulation { replicates: p.replicates, seed: p.seed, z_dist: p.z_dist };
    let (spec, population, cov) = build_spectrum(&design, p.grid_size)?;
    let cov = cov.expect("p is given");
    match p.model {
        Model::Regression => {
            let alpha = p.alpha.ok_or_else(|| Error::Config("missing key: alpha".into()))?;
            let list = p.shrinkers.as_ref().ok_or_else(|| Error::Config("missing key: shrinkers".into()))?;
            let evals = list.iter().map(|h| h.evaluator(&spec)).collect::<Result<Vec<_>>>()?;
            let labels: Vec<f64> = (0..list.len()).map(|k| k as f64).collect();
            let config = design.experiment(alpha, &sim)?;
            log::info!("simulating {} regression replicates", config.replicates);
            let mc = run_regression_curve(&config, &cov, &labels, &evals)?;
            csv_or_json(format, &mc, |w| mc.write_csv("shrinker", w))
        }
        Model::Lda => {
            let alphas = p.alphas.as_ref().ok_or_else(|| Error::Config("missing key: alphas".into()))?;
            let shrinker = p.shrinker.as_ref().ok_or_else(|| Error::Config("missing key: shrinker".into()))?;
            let first = *alphas.first().ok_or_else(|| Error::Config("alphas must not be empty".into()))?;
            let base = LdaModelParams::new(first, design.gamma()?, population)?;
            let points = alphas
                .iter()
                .map(|&a| Ok((a, shrinker.at(&base.with_alpha(a)?, &spec)?.evaluator(&spec)?)))
                .collect::<Result<Vec<_>>>()?;
            let config = design.experiment(first, &sim)?;
            log::info!("simulating {} LDA replicates", config.replicates);
            let mc = run_lda_errors(&config, &cov, &points)?;
            csv_or_json(format, &mc, |w| mc.write_csv(w))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimateParams {
    p: usize,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    population: Option<PopulationInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<SigmaSpec>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    z_dist: ZDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth: Option<f64>,
}

fn estimate_cmd(p: &EstimateParams, format: Format) -> Result<Vec<u8>> {
    let design = Design { gamma: None, p: Some(p.p), n: Some(p.n), population: p.population.clone(), sigma: p.sigma.clone() };
    let sim = Simulation { replicates: 1, seed: p.seed, z_dist: p.z_dist };
    let config = design.experiment(0.0, &sim)?;
    let cov = Covariance::build(&config.sigma, config.p)?;
    log::info!("drawing one sample (p = {}, n = {})", config.p, config.n);
    let draw = crate::montecarlo::generate_regression_draw(&config, &cov, 0)?;
    let eig = SampleEigen::from_data(&draw.x)?;
    let est = kernel_estimate_fg(&eig.lambda, config.gamma()?.value(), p.bandwidth, None)?;
    csv_or_json(format, &est, |w| {
        writeln!(w, "x,f_hat,g_hat")?;
        for k in 0..est.x.len() {
            writeln!(w, "{},{},{}", est.x[k], est.f_hat[k], est.g_hat[k])?;
        }
        Ok(())
    })
}
