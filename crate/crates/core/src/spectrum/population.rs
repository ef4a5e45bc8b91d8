use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point mass of a population spectral distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Eigenvalue location.
    pub t: f64,
    /// Probability mass.
    pub w: f64,
}

/// Limiting spectral distribution `H` of the population covariance, stored as
/// a finite list of weighted atoms sorted by location.
///
/// Continuous distributions (for example the spectrum of an AR(1) Toeplitz
/// covariance) are represented by the eigenvalues of a finite instance, one
/// equally weighted atom per eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSpectrum {
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawSpectrum {
    atoms: Vec<Atom>,
}

impl<'de> Deserialize<'de> for PopulationSpectrum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpectrum::deserialize(d)?;
        PopulationSpectrum::new(raw.atoms).map_err(serde::de::Error::custom)
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl PopulationSpectrum {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Config("population spectrum needs at least one atom".into()));
        }
        for a in &atoms {
            if !a.t.is_finite() || a.t < 0.0 {
                return Err(Error::Config(format!("atom location {} must be finite and >= 0", a.t)));
            }
            if !a.w.is_finite() || a.w <= 0.0 {
                return Err(Error::Config(format!("atom weight {} must be positive", a.w)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!("atom weights sum to {total}, expected 1")));
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.t == a.t => last.w += a.w,
                _ => merged.push(a),
            }
        }
        Ok(Self { atoms: merged })
    }

    /// Point mass at `t`.
    pub fn point_mass(t: f64) -> Result<Self> {
        Self::new(vec![Atom { t, w: 1.0 }])
    }

    /// Equal weights on the given locations.
    pub fn uniform(locations: &[f64]) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::Config("no locations given".into()));
        }
        let w = 1.0 / locations.len() as f64;
        let mut atoms: Vec<Atom> = locations.iter().map(|&t| Atom { t, w }).collect();
        renormalize(&mut atoms);
        Self::new(atoms)
    }

    /// Spectrum of a finite covariance matrix from its eigenvalues.
    pub fn from_eigenvalues(eigenvalues: &[f64]) -> Result<Self> {
        Self::uniform(eigenvalues)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `∫ t dH(t)`.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.w * a.t).sum()
    }

    /// `∫ t² dH(t)`.
    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.w * a.t * a.t).sum()
    }

    pub fn min_location(&self) -> f64 {
        self.atoms[0].t
    }

    pub fn max_location(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].t
    }

    /// Pushforward under `t ↦ c·t`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("scale factor {c} must be positive")));
        }
        Ok(Self {
            atoms: self.atoms.iter().map(|a| Atom { t: a.t * c, w: a.w }).collect(),
        })
    }
}

// Rounding in w = 1/p can leave the sum a few ulps away from 1 for large p.
fn renormalize(atoms: &mut [Atom]) {
    let total: f64 = atoms.iter().map(|a| a.w).sum();
    for a in atoms.iter_mut() {
        a.w /= total;
    }
}

/// Aspect ratio `γ = lim p/n`. The value 1 is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("aspect ratio {gamma} must be positive")));
        }
        if (gamma - 1.0).abs() < 1e-3 {
            return Err(Error::Config(format!(
                "aspect ratio {gamma} is within 1e-3 of 1, which is not supported"
            )));
        }
        Ok(Self(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `p / n` for a finite design.
    pub fn from_dims(p: usize, n: usize) -> Result<Self> {
        Self::new(p as f64 / n as f64)
    }
}

impl TryFrom<f64> for AspectRatio {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AspectRatio> for f64 {
    fn from(g: AspectRatio) -> f64 {
        g.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        assert!(PopulationSpectrum::new(vec![Atom { t: 1.0, w: 0.4 }]).is_err());
        assert!(PopulationSpectrum::new(vec![Atom { t: 1.0, w: 1.0 }, Atom { t: 2.0, w: 0.0 }]).is_err());
        assert!(PopulationSpectrum::new(vec![Atom { t: -1.0, w: 1.0 }]).is_err());
        assert!(PopulationSpectrum::new(vec![]).is_err());
    }

    #[test]
    fn merges_and_sorts() {
        let h = PopulationSpectrum::uniform(&[4.0, 1.0, 4.0, 1.0]).unwrap();
        assert_eq!(h.atoms().len(), 2);
        assert_eq!(h.atoms()[0].t, 1.0);
        assert!((h.atoms()[1].w - 0.5).abs() < 1e-15);
        assert!((h.mean() - 2.5).abs() < 1e-15);
        assert!((h.second_moment() - 8.5).abs() < 1e-15);
    }

    #[test]
    fn many_equal_weights_sum_to_one() {
        let eig: Vec<f64> = (0..1000).map(|i| 0.5 + i as f64 * 1e-3).collect();
        let h = PopulationSpectrum::from_eigenvalues(&eig).unwrap();
        assert_eq!(h.atoms().len(), 1000);
    }

    #[test]
    fn json_round_trip() {
        let h: PopulationSpectrum =
            serde_json::from_str(r#"{"atoms":[{"t":1.0,"w":0.5},{"t":4.0,"w":0.5}]}"#).unwrap();
        assert_eq!(
            serde_json::to_string(&h).unwrap(),
            r#"{"atoms":[{"t":1.0,"w":0.5},{"t":4.0,"w":0.5}]}"#
        );
        assert!(serde_json::from_str::<PopulationSpectrum>(r#"{"atoms":[{"t":1.0,"w":0.7}]}"#).is_err());
    }

    #[test]
    fn aspect_ratio_excludes_one() {
        assert!(AspectRatio::new(1.0).is_err());
        assert!(AspectRatio::new(1.0005).is_err());
        assert!(AspectRatio::new(0.0).is_err());
        assert!(AspectRatio::new(1.002).is_ok());
        assert!(serde_json::from_str::<AspectRatio>("1.0").is_err());
        assert_eq!(serde_json::from_str::<AspectRatio>("0.5").unwrap().value(), 0.5);
    }
}
