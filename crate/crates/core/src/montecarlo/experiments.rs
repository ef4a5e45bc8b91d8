use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::empirical::{diag_projection, regression_path, trace_m, trace_t, trace_two_resolvent, LdaStatistics, SampleEigen};
use super::{generate_lda_draw, generate_regression_draw, Covariance, ExperimentConfig};
use crate::error::{Error, Result};
use crate::functionals::Evaluator;

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let count = values.len();
    if count == 0 {
        return Summary { mean: f64::NAN, se: f64::NAN, count };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let se = if count > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        (var / count as f64).sqrt()
    } else {
        f64::NAN
    };
    Summary { mean, se, count }
}

fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

/// Per-replicate test risks and training errors along a list of shrinkers
/// (typically gradient flow at increasing times).
#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub labels: Vec<f64>,
    /// `test[r][k]`: replicate `r`, shrinker `k`.
    pub test: Vec<Vec<f64>>,
    pub train: Vec<Vec<f64>>,
}

impl CurveSummary {
    pub fn test_summary(&self, k: usize) -> Summary {
        summarize(&column(&self.test, k))
    }

    pub fn train_summary(&self, k: usize) -> Summary {
        summarize(&column(&self.train, k))
    }

    /// One row per `(replicate, label)` followed by `mean` and `se` rows.
    pub fn write_csv<W: Write>(&self, label_name: &str, mut out: W) -> Result<()> {
        writeln!(out, "row,{label_name},test_risk,train_error")?;
        for (r, (test, train)) in self.test.iter().zip(&self.train).enumerate() {
            for (k, l) in self.labels.iter().enumerate() {
                writeln!(out, "{r},{l},{},{}", test[k], train[k])?;
            }
        }
        for (k, l) in self.labels.iter().enumerate() {
            let (t, e) = (self.test_summary(k), self.train_summary(k));
            writeln!(out, "mean,{l},{},{}", t.mean, e.mean)?;
            writeln!(out, "se,{l},{},{}", t.se, e.se)?;
        }
        Ok(())
    }
}

/// Simulates `config.replicates` regression draws and evaluates every
/// shrinker on each. `labels[k]` names `shrinkers[k]` in the output.
pub fn run_regression_curve(
    config: &ExperimentConfig,
    cov: &Covariance,
    labels: &[f64],
    shrinkers: &[Evaluator],
) -> Result<CurveSummary> {
    if labels.len() != shrinkers.len() {
        return Err(Error::Config("one label per shrinker is required".into()));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let draw = generate_regression_draw(config, cov, r)?;
            let path = regression_path(&draw, cov)?;
            let mut test = Vec::with_capacity(shrinkers.len());
            let mut train = Vec::with_capacity(shrinkers.len());
            for h in shrinkers {
                let (a, b) = path.evaluate(h)?;
                test.push(a);
                train.push(b);
            }
            log::debug!("regression replicate {r} done");
            Ok((test, train))
        })
        .collect::<Result<_>>()?;
    let (test, train) = rows.into_iter().unzip();
    Ok(CurveSummary { labels: labels.to_vec(), test, train })
}

/// Conditional LDA errors per replicate and signal strength.
#[derive(Debug, Clone, Serialize)]
pub struct LdaErrorSummary {
    pub alphas: Vec<f64>,
    /// `errors[r][k]` for replicate `r` at `alphas[k]`.
    pub errors: Vec<Vec<f64>>,
    pub degenerate: usize,
}

impl LdaErrorSummary {
    pub fn summary(&self, k: usize) -> Summary {
        summarize(&column(&self.errors, k))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,alpha,error")?;
        for (r, row) in self.errors.iter().enumerate() {
            for (k, a) in self.alphas.iter().enumerate() {
                writeln!(out, "{r},{a},{}", row[k])?;
            }
        }
        for (k, a) in self.alphas.iter().enumerate() {
            let s = self.summary(k);
            writeln!(out, "mean,{a},{}", s.mean)?;
            writeln!(out, "se,{a},{}", s.se)?;
        }
        Ok(())
    }
}

/// Simulates `config.replicates` LDA draws; each draw is evaluated at every
/// `(α, h)` pair by rescaling the signal, so the noise is shared across `α`.
pub fn run_lda_errors(config: &ExperimentConfig, cov: &Covariance, points: &[(f64, Evaluator)]) -> Result<LdaErrorSummary> {
    let results: Vec<(Vec<f64>, usize)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let draw = generate_lda_draw(config, cov, r)?;
            let stats = LdaStatistics::from_draw(&draw)?;
            let mut errors = Vec::with_capacity(points.len());
            let mut degenerate = 0;
            for (alpha, h) in points {
                let hv = stats.eig.apply(h)?;
                if hv.iter().any(|&v| v < 0.0) {
                    return Err(Error::Domain("LDA shrinkage must be nonnegative".into()));
                }
                let (e, d) = stats.error(&hv, cov, *alpha);
                errors.push(e);
                degenerate += usize::from(d);
            }
            Ok((errors, degenerate))
        })
        .collect::<Result<_>>()?;
    Ok(LdaErrorSummary {
        alphas: points.iter().map(|p| p.0).collect(),
        degenerate: results.iter().map(|r| r.1).sum(),
        errors: results.into_iter().map(|r| r.0).collect(),
    })
}

/// Per-replicate empirical `M(h_k)`, `T(h_k)` and two-resolvent traces.
#[derive(Debug, Clone)]
pub struct TraceSamples {
    pub m: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub resolvent: Vec<Vec<Complex64>>,
}

/// Empirical trace functionals over `config.replicates` draws of `X`.
/// The signal is irrelevant and `config.alpha` is ignored.
pub fn trace_functional_experiment(
    config: &ExperimentConfig,
    cov: &Covariance,
    shrinkers: &[Evaluator],
    z_pairs: &[(Complex64, Complex64)],
) -> Result<TraceSamples> {
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<Complex64>)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let draw = generate_regression_draw(config, cov, r)?;
            let eig = SampleEigen::from_data(&draw.x)?;
            drop(draw);
            let b = eig.project(cov);
            let bkk = diag_projection(&eig, cov);
            let m = shrinkers.iter().map(|h| trace_m(&eig, &bkk, h)).collect::<Result<_>>()?;
            let t = shrinkers.iter().map(|h| trace_t(&eig, &b, h)).collect::<Result<_>>()?;
            let res = z_pairs.iter().map(|&(z1, z2)| trace_two_resolvent(&eig, &b, z1, z2)).collect();
            log::debug!("trace replicate {r} done");
            Ok((m, t, res))
        })
        .collect::<Result<_>>()?;
    let mut out = TraceSamples { m: Vec::new(), t: Vec::new(), resolvent: Vec::new() };
    for (m, t, z) in rows {
        out.m.push(m);
        out.t.push(t);
        out.resolvent.push(z);
    }
    Ok(out)
}

impl TraceSamples {
    pub fn m_summary(&self, k: usize) -> Summary {
        summarize(&column(&self.m, k))
    }

    pub fn t_summary(&self, k: usize) -> Summary {
        summarize(&column(&self.t, k))
    }

    /// Summaries of the real and imaginary parts.
    pub fn resolvent_summary(&self, k: usize) -> (Summary, Summary) {
        let re: Vec<f64> = self.resolvent.iter().map(|r| r[k].re).collect();
        let im: Vec<f64> = self.resolvent.iter().map(|r| r[k].im).collect();
        (summarize(&re), summarize(&im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_values() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(summarize(&[1.0]).se.is_nan());
    }
}
