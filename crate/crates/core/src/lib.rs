//! Asymptotic risk formulas for spectral shrinkage estimators.
//!
//! The crate solves the generalized Marchenko–Pastur equation for a
//! population spectrum, evaluates the limiting trace functionals of a sample
//! covariance matrix under a shrinkage function, and uses them to predict
//! test/training error of shrinkage regression (including gradient-descent
//! learning curves) and the misclassification error of shrinkage LDA. A Monte
//! Carlo harness checks every prediction against finite-sample simulation.
//!
//! Module map:
//! - [`spectrum`]: population spectra, Stieltjes transform solver, support and
//!   boundary values of the limiting spectral distribution.
//! - [`functionals`]: shrinkage functions and the trace functionals `M`, `T`.
//! - [`regression`]: test risk, learning curves and training error.
//! - [`lda`]: LDA error, the optimal-shrinkage quadratic program, mean shrinkage.
//! - [`montecarlo`]: data generation and empirical counterparts.
//! - [`cli`]: JSON-configured runs producing CSV/JSON artifacts.

pub mod cli;
pub mod error;
pub mod functionals;
pub mod lda;
pub mod montecarlo;
pub mod regression;
pub mod spectrum;
mod util;

pub use error::{Error, Result};
pub use functionals::{FunctionalValue, ShrinkageFunction};
pub use spectrum::{AspectRatio, LimitingSpectrum, PopulationSpectrum};
