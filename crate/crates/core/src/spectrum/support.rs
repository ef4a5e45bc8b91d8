//! Support of `F_{γ,H}` from the real inverse map.
//!
//! On the real line, away from `0` and the poles `-1/t`, a real `m̲` with
//! `z'(m̲) > 0` is the value of the companion transform at the real point
//! `z(m̲)`, which therefore lies outside the support. The images of all
//! increasing stretches of `z` are the gaps; the support is what remains of
//! `(0, ∞)`.

use serde::{Deserialize, Serialize};

use super::population::{AspectRatio, PopulationSpectrum};
use super::stieltjes::InverseMap;
use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

const SAMPLES_BOUNDED: usize = 96;
const SAMPLES_UNBOUNDED: usize = 400;

/// Limit of `z` at one end of a monotone stretch.
#[derive(Debug, Clone, Copy)]
enum End {
    Value(f64),
    PlusInf,
    MinusInf,
}

impl End {
    fn value(self) -> f64 {
        match self {
            End::Value(v) => v,
            End::PlusInf => f64::INFINITY,
            End::MinusInf => f64::NEG_INFINITY,
        }
    }
}

/// One stretch of the real `m̲` axis between consecutive singularities.
struct Segment {
    /// Sample abscissae in increasing order, strictly inside the segment.
    samples: Vec<f64>,
    left: End,
    right: End,
}

fn chebyshev_unit(k: usize, count: usize) -> f64 {
    // Points in (0, 1) clustered toward both ends.
    let theta = std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
    0.5 * (1.0 - theta.cos())
}

fn segments(map: &InverseMap<'_>) -> Vec<Segment> {
    let poles: Vec<f64> = map.atoms().iter().map(|a| -1.0 / a.t).collect();
    let mut out = Vec::with_capacity(poles.len() + 2);

    // (-∞, first pole): z → 0 as m̲ → -∞ and z → -∞ at the pole.
    let first = poles[0];
    let samples = (0..SAMPLES_UNBOUNDED)
        .map(|k| {
            let s = chebyshev_unit(k, SAMPLES_UNBOUNDED);
            first - first.abs() * (1.0 - s) / s
        })
        .collect();
    out.push(Segment { samples, left: End::Value(0.0), right: End::MinusInf });

    // Between poles: z → +∞ just right of a pole, -∞ just left of the next.
    for pair in poles.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let samples = (0..SAMPLES_BOUNDED)
            .map(|k| a + (b - a) * chebyshev_unit(k, SAMPLES_BOUNDED))
            .collect();
        out.push(Segment { samples, left: End::PlusInf, right: End::MinusInf });
    }

    // (last pole, 0): z → +∞ at both ends.
    let last = poles[poles.len() - 1];
    let samples = (0..SAMPLES_BOUNDED)
        .map(|k| last - last * chebyshev_unit(k, SAMPLES_BOUNDED))
        .collect();
    out.push(Segment { samples, left: End::PlusInf, right: End::PlusInf });

    // (0, ∞): z → -∞ at 0⁺ and z → 0 as m̲ → ∞.
    let scale = 1.0 / map.atoms().iter().map(|a| a.w * a.t).sum::<f64>();
    let samples = (0..SAMPLES_UNBOUNDED)
        .map(|k| {
            let s = chebyshev_unit(k, SAMPLES_UNBOUNDED);
            scale * s / (1.0 - s)
        })
        .collect();
    out.push(Segment { samples, left: End::MinusInf, right: End::Value(0.0) });
    out
}

/// Refines a sign change of `z'` between `a` and `b` by bisection.
fn refine_critical(map: &InverseMap<'_>, mut a: f64, mut b: f64) -> f64 {
    let sa = map.dz_real(a) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (map.dz_real(mid) > 0.0) == sa {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Open gaps `(lo, hi)` of the support on the real line.
fn gaps(map: &InverseMap<'_>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for seg in segments(map) {
        let mut start = seg.left;
        let mut rising = map.dz_real(seg.samples[0]) > 0.0;
        for w in seg.samples.windows(2) {
            let next_rising = map.dz_real(w[1]) > 0.0;
            if next_rising != rising {
                let m = refine_critical(map, w[0], w[1]);
                let end = End::Value(map.z_real(m));
                if rising {
                    out.push((start.value(), end.value()));
                }
                start = end;
                rising = next_rising;
            }
        }
        if rising {
            out.push((start.value(), seg.right.value()));
        }
    }
    out
}

/// Interior points of the support where two bulks of the density almost
/// separate, sorted.
///
/// There `z'` has a negative local maximum `-a` at a real `m*` and the density
/// dips in a cusp of width about `a·√(2a/|z'''(m*)|)` around `z(m*)`. Only
/// dips narrower than `rel_width` times their interval are returned: a
/// Chebyshev rule across such a dip converges slowly, while the rule on a
/// piece ending where the density is positive is only second order, so
/// splitting at a mild dip costs more than it gains.
pub(crate) fn sharp_merges(h: &PopulationSpectrum, gamma: AspectRatio, support: &[Interval], rel_width: f64) -> Vec<f64> {
    let map = InverseMap::new(h, gamma);
    let mut out = Vec::new();
    for seg in segments(&map) {
        let d2: Vec<f64> = seg.samples.iter().map(|&m| map.higher_derivs_real(m).0).collect();
        for k in 1..seg.samples.len() {
            if !(d2[k - 1] > 0.0 && d2[k] <= 0.0) {
                continue;
            }
            let (mut a, mut b) = (seg.samples[k - 1], seg.samples[k]);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if map.higher_derivs_real(mid).0 > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let m = 0.5 * (a + b);
            let depth = -map.dz_real(m);
            if !(depth > 0.0) {
                continue;
            }
            let x = map.z_real(m);
            let Some(iv) = support.iter().find(|iv| iv.lo < x && x < iv.hi) else {
                continue;
            };
            let width = depth * (2.0 * depth / map.higher_derivs_real(m).1.abs()).sqrt();
            let margin = 1e-6 * iv.width();
            if width < rel_width * iv.width() && x - iv.lo > margin && iv.hi - x > margin {
                out.push(x);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Support of the limiting spectral distribution on `(0, ∞)` as sorted,
/// disjoint closed intervals. The atom at zero for `γ > 1` is not included.
pub fn find_support(h: &PopulationSpectrum, gamma: AspectRatio) -> Result<Vec<Interval>> {
    if h.min_location() <= 0.0 {
        return Err(Error::Domain(
            "limiting spectrum requires strictly positive population eigenvalues".into(),
        ));
    }
    let map = InverseMap::new(h, gamma);
    let mut gaps: Vec<(f64, f64)> = gaps(&map)
        .into_iter()
        .filter(|&(lo, hi)| hi > 0.0 && hi > lo)
        .map(|(lo, hi)| (lo.max(0.0), hi))
        .collect();
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));

    let scale = h.max_location() * (1.0 + gamma.value().sqrt()).powi(2);
    let min_width = 1e-12 * scale;
    let mut support = Vec::new();
    let mut cursor = 0.0_f64;
    for (lo, hi) in gaps {
        if hi <= cursor {
            continue;
        }
        if lo > cursor {
            if cursor == 0.0 {
                return Err(Error::Numerical(format!(
                    "support reaches down to 0 (first gap starts at {lo})"
                )));
            }
            if lo - cursor > min_width {
                support.push(Interval { lo: cursor, hi: lo });
            }
        }
        cursor = cursor.max(hi);
    }
    if cursor.is_finite() {
        return Err(Error::Numerical("support is unbounded above".into()));
    }
    if support.is_empty() {
        return Err(Error::Numerical("no support interval found".into()));
    }
    Ok(support)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(gamma: f64) -> (f64, f64) {
        ((1.0 - gamma.sqrt()).powi(2), (1.0 + gamma.sqrt()).powi(2))
    }

    #[test]
    fn identity_support_matches_closed_form() {
        for gamma in [0.1, 0.5, 2.0, 4.0] {
            let h = PopulationSpectrum::point_mass(1.0).unwrap();
            let s = find_support(&h, AspectRatio::new(gamma).unwrap()).unwrap();
            let (a, b) = edges(gamma);
            assert_eq!(s.len(), 1);
            assert!((s[0].lo - a).abs() < 1e-10, "gamma={gamma}: {} vs {a}", s[0].lo);
            assert!((s[0].hi - b).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_identity_support() {
        let h = PopulationSpectrum::point_mass(4.0).unwrap();
        let s = find_support(&h, AspectRatio::new(0.5).unwrap()).unwrap();
        let (a, b) = edges(0.5);
        assert!((s[0].lo - 4.0 * a).abs() < 1e-9);
        assert!((s[0].hi - 4.0 * b).abs() < 1e-9);
    }

    #[test]
    fn two_atoms_small_gamma_split() {
        let h = PopulationSpectrum::uniform(&[1.0, 4.0]).unwrap();
        let s = find_support(&h, AspectRatio::new(0.05).unwrap()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].contains(1.0) && s[1].contains(4.0));
        assert!(s[0].hi < s[1].lo);
    }

    #[test]
    fn two_atoms_narrow_gap() {
        // Critical values of z(m̲) on (-1, -1/4), located independently by
        // bracketing z' on a fine grid: 1.5979213563767 and 1.6931595362626.
        let h = PopulationSpectrum::uniform(&[1.0, 4.0]).unwrap();
        let s = find_support(&h, AspectRatio::new(1.0 / 3.0).unwrap()).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].hi - 1.5979213563767).abs() < 1e-9);
        assert!((s[1].lo - 1.6931595362626).abs() < 1e-9);
        let bound = 4.0 * (1.0 + (1.0f64 / 3.0).sqrt()).powi(2);
        assert!(s[0].lo > 0.0 && s[1].hi <= bound);
    }

    #[test]
    fn two_atoms_merge_at_larger_gamma() {
        let h = PopulationSpectrum::uniform(&[1.0, 4.0]).unwrap();
        let s = find_support(&h, AspectRatio::new(0.5).unwrap()).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn zero_location_rejected() {
        let h = PopulationSpectrum::uniform(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            find_support(&h, AspectRatio::new(0.5).unwrap()),
            Err(Error::Domain(_))
        ));
    }
}
