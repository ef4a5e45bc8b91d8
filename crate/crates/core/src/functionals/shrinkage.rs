use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{Interval, LimitingSpectrum};

/// Closed-form shrinkage families. Serialized with a `family` tag, e.g.
/// `{"family":"ridge","lambda":0.33}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `√x / (x + λ)`: ridge regression on singular values.
    Ridge { lambda: f64 },
    /// `(1 - e^{-t(x+λ)}) √x / (x + λ)`: gradient flow on the ridge loss.
    GradientFlow { t: f64, lambda: f64 },
    /// `1/√x`, with 0 at 0 (minimum-norm least squares).
    PseudoInverse,
    /// `1 / (x + λ)`; for `λ = 0` this is `1/x` with 0 at 0.
    RidgeInverse { lambda: f64 },
    /// `x`, i.e. the sample covariance itself.
    Identity,
    Constant { c: f64 },
    /// `e^{-rate·x}`.
    Exponential { rate: f64 },
    /// `Σ_k coeffs[k] x^k`.
    Polynomial { coeffs: Vec<f64> },
    /// Frobenius-optimal covariance shrinker `1 / (x |m̲(x)|²)`.
    LpCovariance,
    /// Frobenius-optimal precision shrinker `(γ - 1 - 2 x f(x)) / x`.
    LpPrecision,
    /// Optimal mean shrinker `s / (s + 1/(x|m̲|²))` with `s = α²/γ`.
    /// `gamma`, when given, must equal the spectrum's aspect ratio.
    MeanShrinker {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

/// A shrinkage function `h` applied to sample eigenvalues.
///
/// Either a closed-form [`Family`] or a table of values on the grid of a
/// particular [`LimitingSpectrum`] plus the value at zero, serialized as
/// `{"grid":[...],"at_zero":v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShrinkageFunction {
    Family(Family),
    Grid { grid: Vec<f64>, at_zero: f64 },
}

impl From<Family> for ShrinkageFunction {
    fn from(f: Family) -> Self {
        ShrinkageFunction::Family(f)
    }
}

impl Family {
    /// Whether the values depend on the limiting spectrum.
    pub fn is_spectral(&self) -> bool {
        matches!(self, Family::LpCovariance | Family::LpPrecision | Family::MeanShrinker { .. })
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} = {v} is invalid")));
        match *self {
            Family::Ridge { lambda } | Family::RidgeInverse { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad("lambda", lambda)
            }
            Family::GradientFlow { t, lambda } => {
                if !(t >= 0.0 && t.is_finite()) {
                    bad("t", t)
                } else if !(lambda >= 0.0 && lambda.is_finite()) {
                    bad("lambda", lambda)
                } else {
                    Ok(())
                }
            }
            Family::Constant { c } if !c.is_finite() => bad("c", c),
            Family::Exponential { rate } if !rate.is_finite() => bad("rate", rate),
            Family::MeanShrinker { alpha, .. } if !(alpha >= 0.0 && alpha.is_finite()) => bad("alpha", alpha),
            _ => Ok(()),
        }
    }

    /// Value at `x ≥ 0` for families that do not depend on the spectrum.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = match self {
            Family::Ridge { lambda } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.sqrt() / (x + lambda)
                }
            }
            Family::GradientFlow { t, lambda } => {
                if x == 0.0 {
                    0.0
                } else {
                    -(-t * (x + lambda)).exp_m1() * x.sqrt() / (x + lambda)
                }
            }
            Family::PseudoInverse => {
                if x == 0.0 {
                    0.0
                } else {
                    1.0 / x.sqrt()
                }
            }
            Family::RidgeInverse { lambda } => {
                if *lambda == 0.0 && x == 0.0 {
                    0.0
                } else {
                    1.0 / (x + lambda)
                }
            }
            Family::Identity => x,
            Family::Constant { c } => *c,
            Family::Exponential { rate } => (-rate * x).exp(),
            Family::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Family::LpCovariance | Family::LpPrecision | Family::MeanShrinker { .. } => {
                return Err(Error::Evaluation(format!(
                    "{self:?} depends on the limiting spectrum; evaluate it through a spectrum"
                )))
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("{self:?} is not finite at x = {x}")))
        }
    }

    /// Values at the grid nodes of `spec` and at zero.
    fn tabulate(&self, spec: &LimitingSpectrum) -> Result<(Vec<f64>, f64)> {
        match self {
            Family::LpCovariance => {
                let nodes = (0..spec.len()).map(|j| 1.0 / (spec.grid()[j] * spec.modulus_sq(j))).collect();
                let at_zero = spec.m0().map_or(0.0, |m0| 1.0 / ((spec.gamma().value() - 1.0) * m0));
                Ok((nodes, at_zero))
            }
            Family::LpPrecision => {
                let gamma = spec.gamma().value();
                let nodes: Vec<f64> = spec
                    .grid()
                    .iter()
                    .zip(spec.f_vals())
                    .map(|(&x, &f)| (gamma - 1.0 - 2.0 * x * f) / x)
                    .collect();
                let at_zero = if gamma > 1.0 {
                    // Null eigenvectors carry the rest of tr(Σ⁻¹)/p.
                    let inv_mean: f64 = spec.population().atoms().iter().map(|a| a.w / a.t).sum();
                    let bulk: f64 = (0..spec.len())
                        .map(|j| nodes[j] * spec.density_vals()[j] * spec.weights()[j])
                        .sum();
                    (inv_mean - bulk) / spec.atom0_mass()
                } else {
                    0.0
                };
                Ok((nodes, at_zero))
            }
            Family::MeanShrinker { alpha, gamma } => {
                let g = spec.gamma().value();
                if let Some(declared) = gamma {
                    if (declared - g).abs() > 1e-12 {
                        return Err(Error::Config(format!(
                            "mean_shrinker declared for γ = {declared} but the spectrum has γ = {g}"
                        )));
                    }
                }
                let s = alpha * alpha / g;
                let (cov, cov0) = Family::LpCovariance.tabulate(spec)?;
                let r = |c: f64| if s == 0.0 { 0.0 } else { s / (s + c) };
                let at_zero = if spec.m0().is_some() { r(cov0) } else { 0.0 };
                Ok((cov.into_iter().map(r).collect(), at_zero))
            }
            _ => {
                let nodes = spec.grid().iter().map(|&x| self.eval(x)).collect::<Result<_>>()?;
                Ok((nodes, self.eval(0.0)?))
            }
        }
    }
}

impl ShrinkageFunction {
    pub fn ridge(lambda: f64) -> Self {
        Family::Ridge { lambda }.into()
    }

    pub fn gradient_flow(t: f64, lambda: f64) -> Self {
        Family::GradientFlow { t, lambda }.into()
    }

    pub fn constant(c: f64) -> Self {
        Family::Constant { c }.into()
    }

    /// Values `h(x_j)` at the grid nodes of `spec` and `h(0)`.
    ///
    /// Fails with an evaluation error if any value is not finite or a grid
    /// table does not match the spectrum's grid.
    pub fn tabulate(&self, spec: &LimitingSpectrum) -> Result<(Vec<f64>, f64)> {
        let (nodes, at_zero) = match self {
            ShrinkageFunction::Family(f) => {
                f.validate()?;
                f.tabulate(spec)?
            }
            ShrinkageFunction::Grid { grid, at_zero } => {
                if grid.len() != spec.len() {
                    return Err(Error::Evaluation(format!(
                        "grid shrinkage has {} values but the spectrum grid has {}",
                        grid.len(),
                        spec.len()
                    )));
                }
                (grid.clone(), *at_zero)
            }
        };
        if let Some(j) = nodes.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!("h is not finite at x = {}", spec.grid()[j])));
        }
        if !at_zero.is_finite() {
            return Err(Error::Evaluation("h(0) is not finite".into()));
        }
        Ok((nodes, at_zero))
    }

    /// A callable version of `h` for arbitrary eigenvalues, as needed to
    /// apply the function to a finite sample covariance.
    ///
    /// Closed-form families are evaluated exactly. Spectrum-dependent and grid
    /// functions are interpolated linearly between grid nodes and held
    /// constant beyond the outermost node of each support interval; points
    /// below a small threshold take the value at zero.
    pub fn evaluator(&self, spec: &LimitingSpectrum) -> Result<Evaluator> {
        let zero_threshold = 1e-8 * spec.support().last().map_or(1.0, |iv| iv.hi);
        if let ShrinkageFunction::Family(f) = self {
            f.validate()?;
            if !f.is_spectral() {
                return Ok(Evaluator::Exact { family: f.clone(), zero_threshold });
            }
        }
        let (values, at_zero) = self.tabulate(spec)?;
        let mut pieces = Vec::with_capacity(spec.support().len());
        let mut start = 0;
        for iv in spec.support() {
            let end = start + spec.grid()[start..].iter().take_while(|&&x| x <= iv.hi).count();
            pieces.push(Piece {
                interval: *iv,
                x: spec.grid()[start..end].to_vec(),
                h: values[start..end].to_vec(),
            });
            start = end;
        }
        Ok(Evaluator::Table { pieces, at_zero, zero_threshold })
    }
}

#[derive(Debug, Clone)]
pub struct Piece {
    interval: Interval,
    x: Vec<f64>,
    h: Vec<f64>,
}

impl Piece {
    fn interpolate(&self, x: f64) -> f64 {
        let k = self.x.partition_point(|&v| v < x);
        if k == 0 {
            return self.h[0];
        }
        if k == self.x.len() {
            return self.h[k - 1];
        }
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let s = (x - x0) / (x1 - x0);
        self.h[k - 1] + s * (self.h[k] - self.h[k - 1])
    }

    fn distance(&self, x: f64) -> f64 {
        if x < self.interval.lo {
            self.interval.lo - x
        } else if x > self.interval.hi {
            x - self.interval.hi
        } else {
            0.0
        }
    }
}

/// Shrinkage function ready to be applied to arbitrary eigenvalues.
#[derive(Debug, Clone)]
pub enum Evaluator {
    Exact { family: Family, zero_threshold: f64 },
    Table { pieces: Vec<Piece>, at_zero: f64, zero_threshold: f64 },
}

impl Evaluator {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Evaluator::Exact { family, zero_threshold } => {
                let x = if x <= *zero_threshold { 0.0 } else { x };
                family.eval(x).unwrap_or(f64::NAN)
            }
            Evaluator::Table { pieces, at_zero, zero_threshold } => {
                if x <= *zero_threshold {
                    return *at_zero;
                }
                let nearest = pieces
                    .iter()
                    .min_by(|a, b| a.distance(x).total_cmp(&b.distance(x)))
                    .expect("spectrum has at least one support interval");
                nearest.interpolate(x)
            }
        }
    }

    /// Whether eigenvalues at or below this value are treated as zero.
    pub fn zero_threshold(&self) -> f64 {
        match self {
            Evaluator::Exact { zero_threshold, .. } | Evaluator::Table { zero_threshold, .. } => *zero_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{AspectRatio, PopulationSpectrum};

    #[test]
    fn json_forms() {
        let r: ShrinkageFunction = serde_json::from_str(r#"{"family":"ridge","lambda":0.33}"#).unwrap();
        assert_eq!(r, ShrinkageFunction::ridge(0.33));
        let g: ShrinkageFunction = serde_json::from_str(r#"{"grid":[1.0,2.0],"at_zero":0.5}"#).unwrap();
        assert_eq!(g, ShrinkageFunction::Grid { grid: vec![1.0, 2.0], at_zero: 0.5 });
        let back = serde_json::to_string(&ShrinkageFunction::gradient_flow(5.0, 0.25)).unwrap();
        assert_eq!(back, r#"{"family":"gradient_flow","t":5.0,"lambda":0.25}"#);
        assert!(serde_json::from_str::<ShrinkageFunction>(r#"{"family":"nope"}"#).is_err());
    }

    #[test]
    fn closed_form_values() {
        let gf = |t, x| Family::GradientFlow { t, lambda: 0.0 }.eval(x).unwrap();
        assert_eq!(gf(0.0, 2.0), 0.0);
        assert!((gf(1.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let long = Family::GradientFlow { t: 1e6, lambda: 1.0 / 3.0 }.eval(1.0).unwrap();
        assert!((long - 0.75).abs() < 1e-12);
        assert_eq!(Family::Ridge { lambda: 0.0 }.eval(0.0).unwrap(), 0.0);
        assert_eq!(Family::RidgeInverse { lambda: 0.0 }.eval(0.0).unwrap(), 0.0);
        let p = Family::Polynomial { coeffs: vec![1.0, -2.0, 3.0] };
        assert_eq!(p.eval(2.0).unwrap(), 1.0 - 4.0 + 12.0);
        assert!(Family::LpCovariance.eval(1.0).is_err());
    }

    #[test]
    fn tabulate_checks_grid_length() {
        let h = PopulationSpectrum::point_mass(1.0).unwrap();
        let spec = LimitingSpectrum::build(&h, AspectRatio::new(0.5).unwrap(), 64).unwrap();
        let bad = ShrinkageFunction::Grid { grid: vec![1.0; 3], at_zero: 0.0 };
        assert!(matches!(bad.tabulate(&spec), Err(Error::Evaluation(_))));
        let neg = ShrinkageFunction::ridge(-1.0);
        assert!(neg.tabulate(&spec).is_err());
    }

    #[test]
    fn table_evaluator_interpolates_and_clamps() {
        let h = PopulationSpectrum::point_mass(1.0).unwrap();
        let spec = LimitingSpectrum::build(&h, AspectRatio::new(0.5).unwrap(), 256).unwrap();
        let values: Vec<f64> = spec.grid().iter().map(|x| 2.0 * x + 1.0).collect();
        let ev = ShrinkageFunction::Grid { grid: values, at_zero: -1.0 }.evaluator(&spec).unwrap();
        assert!((ev.eval(1.0) - 3.0).abs() < 1e-12);
        assert_eq!(ev.eval(0.0), -1.0);
        let top = spec.grid()[spec.len() - 1];
        assert!((ev.eval(100.0) - (2.0 * top + 1.0)).abs() < 1e-12);
    }
}
