//! Limiting spectral distribution of sample covariance matrices.

mod limiting;
mod population;
pub(crate) mod stieltjes;
mod support;

pub use limiting::{
    boundary_values, companion_at_zero, CompanionAtZero, LimitingSpectrum, SpectrumSummary, INVARIANT_TOL,
    MIN_GRID_SIZE,
};
pub use population::{Atom, AspectRatio, PopulationSpectrum};
pub use stieltjes::{companion_derivative, companion_transform, solve_stieltjes, StieltjesValue};
pub use support::{find_support, Interval};
