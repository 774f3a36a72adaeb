//! Heuristic Julia-set membership of critical points.

use serde::{Deserialize, Serialize};

use super::{CriticalSet, RationalMap};
use crate::sphere::{chordal_dist, SpherePoint};

pub const DEFAULT_JULIA_HORIZON: usize = 500;

/// Longest cycle searched for.
const MAX_PERIOD: usize = 64;
/// Chordal distance at which an orbit point counts as a return.
const RETURN_TOL: f64 = 1e-9;
const ATTRACTING_MARGIN: f64 = 1e-9;
const INDIFFERENT_BAND: f64 = 1e-6;
/// Euclidean modulus past which a polynomial orbit is taken to escape.
const ESCAPE_RADIUS: f64 = 1e12;

/// User-pinned membership for one critical point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JuliaOverride {
    pub point: SpherePoint,
    pub in_julia: bool,
}

/// How a critical point's membership was decided.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JuliaVerdict {
    Unclassified,
    /// The orbit returned to within `1e-9` of an earlier point; the cycle
    /// multiplier modulus decides.
    Cycle {
        preperiod: usize,
        period: usize,
        multiplier: f64,
        indifferent: bool,
    },
    /// Polynomial orbit left every bounded set.
    Escaped { step: usize },
    Undecided { horizon: usize },
    Override,
}

/// Fills `in_julia` for every critical point.
///
/// A critical point is placed in the Fatou set when its forward orbit reaches
/// a cycle of multiplier modulus `< 1 − 1e-9` or escapes (polynomials only)
/// within `horizon` steps. A cycle with larger multiplier places it in `J`.
/// When neither happens it is assumed to be in `J` and flagged undecided.
/// Overrides win over the heuristic.
pub fn julia_classify(
    f: &RationalMap,
    cs: &CriticalSet,
    horizon: usize,
    overrides: &[JuliaOverride],
) -> CriticalSet {
    let mut out = cs.clone();
    for entry in &mut out.entries {
        if let Some(o) = overrides
            .iter()
            .find(|o| chordal_dist(o.point, entry.point) <= 1e-8)
        {
            entry.in_julia = o.in_julia;
            entry.verdict = JuliaVerdict::Override;
            continue;
        }
        let verdict = classify_orbit(f, entry.point, horizon.max(1));
        entry.in_julia = match &verdict {
            JuliaVerdict::Cycle { multiplier, .. } => *multiplier >= 1.0 - ATTRACTING_MARGIN,
            JuliaVerdict::Escaped { .. } => false,
            _ => true,
        };
        entry.verdict = verdict;
    }
    out
}

fn classify_orbit(f: &RationalMap, c: SpherePoint, horizon: usize) -> JuliaVerdict {
    let polynomial = f.is_polynomial();
    let mut orbit = Vec::with_capacity(horizon + 1);
    orbit.push(c);
    let mut z = c;
    for t in 1..=horizon {
        z = f.eval(z);
        if polynomial {
            if let SpherePoint::Finite(w) = z {
                if w.norm() > ESCAPE_RADIUS {
                    return JuliaVerdict::Escaped { step: t };
                }
            }
        }
        // earliest earlier point the orbit returns to, smallest period first
        for p in 1..=MAX_PERIOD.min(t) {
            if chordal_dist(z, orbit[t - p]) < RETURN_TOL {
                let start = t - p;
                let multiplier: f64 = orbit[start..t]
                    .iter()
                    .map(|&x| f.spherical_deriv(x))
                    .product();
                return JuliaVerdict::Cycle {
                    preperiod: start,
                    period: p,
                    multiplier,
                    indifferent: (multiplier - 1.0).abs() < INDIFFERENT_BAND,
                };
            }
        }
        orbit.push(z);
    }
    JuliaVerdict::Undecided { horizon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratmap::{critical_points, Polynomial};
    use crate::sphere::Complex;

    fn classify(f: &RationalMap) -> CriticalSet {
        julia_classify(f, &critical_points(f), DEFAULT_JULIA_HORIZON, &[])
    }

    #[test]
    fn power_map_is_hyperbolic() {
        let f = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
        let cs = classify(&f);
        assert!(cs.entries.iter().all(|c| !c.in_julia));
        assert_eq!(cs.mu_max(), None);
    }

    #[test]
    fn misiurewicz_critical_point_is_in_julia() {
        let f = RationalMap::new(
            Polynomial::new(vec![Complex::new(0.0, 1.0), Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]),
            Polynomial::from_real(&[1.0]),
        )
        .unwrap();
        let cs = classify(&f);
        let zero = cs.find(SpherePoint::ZERO, 1e-12).unwrap();
        assert!(zero.in_julia);
        match zero.verdict {
            JuliaVerdict::Cycle { period, multiplier, preperiod, .. } => {
                assert_eq!(period, 2);
                assert_eq!(preperiod, 2);
                assert!((multiplier - 4.0 * 2f64.sqrt()).abs() < 1e-9);
            }
            ref v => panic!("unexpected verdict {v:?}"),
        }
        assert!(!cs.find(SpherePoint::Infinity, 0.0).unwrap().in_julia);
    }

    #[test]
    fn chebyshev_split() {
        let f = RationalMap::polynomial_real(&[-2.0, 0.0, 1.0]).unwrap();
        let cs = classify(&f);
        assert!(cs.find(SpherePoint::ZERO, 0.0).unwrap().in_julia);
        assert!(!cs.find(SpherePoint::Infinity, 0.0).unwrap().in_julia);
        assert_eq!(cs.mu_max(), Some(2));
    }

    #[test]
    fn basilica_has_no_julia_critical_points() {
        let f = RationalMap::polynomial_real(&[-1.0, 0.0, 1.0]).unwrap();
        assert!(!classify(&f).has_julia_critical());
    }

    #[test]
    fn escaping_orbit_is_fatou() {
        let f = RationalMap::new(
            Polynomial::new(vec![Complex::new(1.0, 1.0), Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]),
            Polynomial::from_real(&[1.0]),
        )
        .unwrap();
        let cs = classify(&f);
        let zero = cs.find(SpherePoint::ZERO, 0.0).unwrap();
        assert!(!zero.in_julia);
    }

    #[test]
    fn override_wins() {
        let f = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
        let cs = julia_classify(
            &f,
            &critical_points(&f),
            10,
            &[JuliaOverride { point: SpherePoint::ZERO, in_julia: true }],
        );
        let zero = cs.find(SpherePoint::ZERO, 0.0).unwrap();
        assert!(zero.in_julia);
        assert_eq!(zero.verdict, JuliaVerdict::Override);
    }
}
