//! Shrinkage functions and the limiting trace functionals
//! `M(h) = lim p⁻¹ tr(Σ h(S_n))` and `T(h) = lim p⁻¹ tr(Σ h(S_n) Σ h(S_n))`.
//!
//! Both are evaluated on the quadrature grid of a [`LimitingSpectrum`](crate::spectrum::LimitingSpectrum).
//! When `γ > 1` the atom of `F_{γ,H}` at zero adds terms in `h(0)` that are
//! reported separately.

mod shrinkage;
mod trace;

pub use shrinkage::{Evaluator, Family, ShrinkageFunction};
pub use trace::{
    companion_boundary, kernel_k, lp_covariance_shrinker, lp_precision_shrinker, m_functional, t_bilinear,
    t_functional, two_resolvent_limit, FunctionalValue, ABS_ACCURACY, COINCIDENT_Z, REL_ACCURACY,
};
pub(crate) use trace::{m_atom_weight, m_from_values, m_weights, t_from_values, t_matrix};
