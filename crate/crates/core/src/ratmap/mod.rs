//! Rational maps of the Riemann sphere.
//!
//! A map `f = P/Q` of degree `d = max(deg P, deg Q)` is evaluated through its
//! homogeneous lift `F(z0, z1) = (P̂, Q̂)` with `P̂(z0, z1) = Σ pₖ z0ᵏ z1^(d−k)`.
//! With normalized coordinates every evaluation happens in a chart of modulus
//! at most one, so poles and the point at infinity need no special cases.

mod julia;
pub mod poly;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use julia::{julia_classify, JuliaOverride, JuliaVerdict, DEFAULT_JULIA_HORIZON};
pub use poly::{poly_roots, Polynomial, Root, RootError};

use crate::sphere::{chordal_dist, spherical_deriv_homogeneous, Chart, Complex, SpherePoint};

const ZERO: Complex = Complex::new(0.0, 0.0);

/// Tolerance for common roots of numerator and denominator.
pub const REDUCTION_TOL: f64 = 1e-10;
/// Relative size below which a leading coefficient counts as a degree drop.
const DEGREE_DROP_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map has degree {0}; degree ≥ 2 is required")]
    DegreeTooLow(usize),
    #[error("denominator is the zero polynomial")]
    ZeroDenominator,
    #[error("numerator and denominator share the root {0} (map is not reduced)")]
    NotReduced(Complex),
    #[error(transparent)]
    Roots(#[from] RootError),
}

/// Degree-`d` rational map `P/Q` in reduced form, with cached critical data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MapSpec", into = "MapSpec")]
pub struct RationalMap {
    num: Polynomial,
    den: Polynomial,
    degree: usize,
    // homogeneous coefficients padded to length d + 1, plus their reversals
    p: Vec<Complex>,
    q: Vec<Complex>,
    p_rev: Vec<Complex>,
    q_rev: Vec<Complex>,
    critical: Vec<(SpherePoint, usize)>,
}

/// Serialized form of a map: ascending coefficient lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapSpec {
    pub numerator: Vec<[f64; 2]>,
    pub denominator: Vec<[f64; 2]>,
}

impl TryFrom<MapSpec> for RationalMap {
    type Error = MapError;
    fn try_from(s: MapSpec) -> Result<Self, MapError> {
        let conv = |v: &[[f64; 2]]| Polynomial::new(v.iter().map(|c| Complex::new(c[0], c[1])).collect());
        RationalMap::new(conv(&s.numerator), conv(&s.denominator))
    }
}

impl From<RationalMap> for MapSpec {
    fn from(f: RationalMap) -> Self {
        let conv = |p: &Polynomial| p.coeffs().iter().map(|c| [c.re, c.im]).collect();
        MapSpec {
            numerator: conv(&f.num),
            denominator: conv(&f.den),
        }
    }
}

/// Value of the lift together with the Jacobian determinant.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LiftEval {
    pub z: (Complex, Complex),
    pub value: (Complex, Complex),
    pub jacobian: Complex,
}

impl RationalMap {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, MapError> {
        if den.is_zero() {
            return Err(MapError::ZeroDenominator);
        }
        let degree = num.degree().max(den.degree());
        if degree < 2 || num.is_zero() {
            return Err(MapError::DegreeTooLow(if num.is_zero() { 0 } else { degree }));
        }
        check_reduced(&num, &den)?;
        let pad = |p: &Polynomial| {
            let mut c = p.coeffs().to_vec();
            c.resize(degree + 1, ZERO);
            c
        };
        let p = pad(&num);
        let q = pad(&den);
        let p_rev = p.iter().rev().copied().collect();
        let q_rev = q.iter().rev().copied().collect();
        let mut f = RationalMap {
            num,
            den,
            degree,
            p,
            q,
            p_rev,
            q_rev,
            critical: Vec::new(),
        };
        f.critical = f.compute_critical()?;
        Ok(f)
    }

    /// Polynomial map with the given ascending real coefficients.
    pub fn polynomial_real(coeffs: &[f64]) -> Result<Self, MapError> {
        Self::new(Polynomial::from_real(coeffs), Polynomial::from_real(&[1.0]))
    }

    /// `self ∘ g`, built from the homogeneous lift `Σ p_k G^k H^{d−k}`.
    pub fn compose(&self, g: &RationalMap) -> Result<RationalMap, MapError> {
        let d = self.degree;
        let one = Polynomial::from_real(&[1.0]);
        let powers = |b: &Polynomial| {
            let mut v = vec![one.clone()];
            for k in 1..=d {
                v.push(v[k - 1].mul(b));
            }
            v
        };
        let gp = powers(&g.num);
        let hp = powers(&g.den);
        let size = d * g.degree + 1;
        let mut num = vec![ZERO; size];
        let mut den = vec![ZERO; size];
        for k in 0..=d {
            let term = gp[k].mul(&hp[d - k]);
            for (i, &c) in term.coeffs().iter().enumerate() {
                num[i] += self.p[k] * c;
                den[i] += self.q[k] * c;
            }
        }
        RationalMap::new(Polynomial::new(num), Polynomial::new(den))
    }

    pub fn numerator(&self) -> &Polynomial {
        &self.num
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.den
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.degree() == 0
    }

    pub fn spec(&self) -> MapSpec {
        self.clone().into()
    }

    /// Evaluates the lift at normalized coordinates; one of `z0`, `z1` is 1.
    #[inline]
    pub(crate) fn lift(&self, p: SpherePoint) -> LiftEval {
        let z = p.homogeneous();
        let d = self.degree as f64;
        let (p_val, p0, p1, q_val, q0, q1);
        if z.1 == Complex::new(1.0, 0.0) {
            // standard chart: ∂0 = P', ∂1 = dP - zP'
            let (a, da) = poly::horner_with_derivative(&self.p, z.0);
            let (b, db) = poly::horner_with_derivative(&self.q, z.0);
            p_val = a;
            p0 = da;
            p1 = a * d - z.0 * da;
            q_val = b;
            q0 = db;
            q1 = b * d - z.0 * db;
        } else {
            // inverted chart u = z1: P̂ = R(u) with R the reversed polynomial,
            // ∂1 = R'(u), ∂0 = dR - uR'
            let u = z.1;
            let (a, da) = poly::horner_with_derivative(&self.p_rev, u);
            let (b, db) = poly::horner_with_derivative(&self.q_rev, u);
            p_val = a;
            p1 = da;
            p0 = a * d - u * da;
            q_val = b;
            q1 = db;
            q0 = b * d - u * db;
        }
        LiftEval {
            z,
            value: (p_val, q_val),
            jacobian: p0 * q1 - p1 * q0,
        }
    }

    /// `f(z)`, with poles sent to `∞`.
    #[inline]
    pub fn eval(&self, z: SpherePoint) -> SpherePoint {
        let l = self.lift(z);
        SpherePoint::from_homogeneous(l.value.0, l.value.1)
    }

    /// `f^n(z)`
    pub fn iterate(&self, mut z: SpherePoint, n: usize) -> SpherePoint {
        for _ in 0..n {
            z = self.eval(z);
        }
        z
    }

    /// Spherical derivative `|f′(z)|(1+|z|²)/(1+|f(z)|²)`, chart independent.
    #[inline]
    pub fn spherical_deriv(&self, z: SpherePoint) -> f64 {
        let l = self.lift(z);
        spherical_deriv_homogeneous(l.z, l.value, l.jacobian, self.degree)
    }

    /// `(f(z), f#(z))` in one evaluation.
    #[inline]
    pub fn eval_with_deriv(&self, z: SpherePoint) -> (SpherePoint, f64) {
        let l = self.lift(z);
        (
            SpherePoint::from_homogeneous(l.value.0, l.value.1),
            spherical_deriv_homogeneous(l.z, l.value, l.jacobian, self.degree),
        )
    }

    /// Spherical derivative computed with the classical one-variable formula
    /// in an explicitly chosen chart for both source and target. Only the
    /// standard and inverted charts are supported; `None` when `z` or `f(z)`
    /// is the chart's pole.
    pub fn spherical_deriv_in_chart(&self, z: SpherePoint, chart: Chart) -> Option<f64> {
        match chart {
            Chart::Standard => {
                let z = z.finite()?;
                let (p, dp) = self.num_eval(z);
                let (q, dq) = self.den_eval(z);
                if q == ZERO {
                    return None;
                }
                let fz = p / q;
                let dfz = (dp * q - p * dq) / (q * q);
                Some(dfz.norm() * (1.0 + z.norm_sqr()) / (1.0 + fz.norm_sqr()))
            }
            Chart::Inverted => {
                // g(u) = 1 / f(1/u) = Q̂(1,u)/P̂(1,u) with the reversed coefficients
                let u = Chart::Inverted.coordinate(z)?;
                let (a, da) = poly::horner_with_derivative(&self.q_rev, u);
                let (b, db) = poly::horner_with_derivative(&self.p_rev, u);
                if b == ZERO {
                    return None;
                }
                let g = a / b;
                let dg = (da * b - a * db) / (b * b);
                Some(dg.norm() * (1.0 + u.norm_sqr()) / (1.0 + g.norm_sqr()))
            }
            Chart::Rotated(_) => None,
        }
    }

    fn num_eval(&self, z: Complex) -> (Complex, Complex) {
        poly::horner_with_derivative(self.num.coeffs(), z)
    }

    fn den_eval(&self, z: Complex) -> (Complex, Complex) {
        poly::horner_with_derivative(self.den.coeffs(), z)
    }

    /// Critical points with local degrees, as computed at construction.
    pub fn critical_points_raw(&self) -> &[(SpherePoint, usize)] {
        &self.critical
    }

    fn compute_critical(&self) -> Result<Vec<(SpherePoint, usize)>, MapError> {
        // P'Q - PQ' has degree ≤ 2d - 2; the deficit is the order at ∞
        let w = self
            .num
            .derivative()
            .mul(&self.den)
            .sub(&self.num.mul(&self.den.derivative()))
            .trimmed(DEGREE_DROP_TOL);
        let mut out = Vec::new();
        if w.degree() > 0 {
            for r in poly_roots(&w)? {
                out.push((SpherePoint::Finite(r.value), r.multiplicity + 1));
            }
        }
        let at_infinity = 2 * self.degree - 2 - w.degree();
        if at_infinity > 0 {
            out.push((SpherePoint::Infinity, at_infinity + 1));
        }
        Ok(out)
    }

    /// All solutions of `f(w) = z` with multiplicity; the multiplicities sum
    /// to `d`. Roots are ordered as returned by [`poly_roots`], with `∞` last.
    pub fn preimages(&self, z: SpherePoint) -> Result<Vec<(SpherePoint, usize)>, MapError> {
        let (a, b) = z.homogeneous();
        // b P(w) - a Q(w) = 0
        let full: Vec<Complex> = self
            .p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| b * p - a * q)
            .collect();
        let scale = full.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut top = self.degree;
        while top > 0 && full[top].norm() <= DEGREE_DROP_TOL * scale {
            top -= 1;
        }
        let mut out = Vec::with_capacity(self.degree);
        if top > 0 {
            let reduced = Polynomial::new(full[..=top].to_vec());
            let rev: Vec<Complex> = full.iter().rev().copied().collect();
            for r in poly_roots(&reduced)? {
                let w = if r.multiplicity == 1 {
                    polish_preimage(&full, &rev, r.value)
                } else {
                    r.value
                };
                out.push((SpherePoint::from_complex(w), r.multiplicity));
            }
        }
        if top < self.degree {
            out.push((SpherePoint::Infinity, self.degree - top));
        }
        Ok(out)
    }

    /// Fixed points `f(z) = z` with multiplicity.
    pub fn fixed_points(&self) -> Result<Vec<(SpherePoint, usize)>, MapError> {
        // homogeneous: z1 P̂ - z0 Q̂ = 0, a form of degree d + 1
        let d = self.degree;
        let mut c = vec![ZERO; d + 2];
        for k in 0..=d {
            c[k] += self.p[k];
            c[k + 1] -= self.q[k];
        }
        let scale = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut top = d + 1;
        while top > 0 && c[top].norm() <= DEGREE_DROP_TOL * scale {
            top -= 1;
        }
        let mut out = Vec::new();
        if top > 0 {
            for r in poly_roots(&Polynomial::new(c[..=top].to_vec()))? {
                out.push((SpherePoint::Finite(r.value), r.multiplicity));
            }
        }
        if top < d + 1 {
            out.push((SpherePoint::Infinity, d + 1 - top));
        }
        Ok(out)
    }
}

/// Newton refinement of a simple root of `Σ cₖ wᵏ` (length `d+1`, possibly
/// with negligible leading terms), in whichever chart keeps `|w| ≤ 1`.
fn polish_preimage(full: &[Complex], rev: &[Complex], w: Complex) -> Complex {
    let residual = |w: Complex| -> f64 {
        if w.norm_sqr() <= 1.0 {
            poly::horner(full, w).norm()
        } else {
            poly::horner(rev, w.inv()).norm()
        }
    };
    let mut best = w;
    let mut best_res = residual(w);
    for _ in 0..3 {
        if best_res == 0.0 {
            break;
        }
        let cand = if best.norm_sqr() <= 1.0 {
            let (p, dp) = poly::horner_with_derivative(full, best);
            best - p / dp
        } else {
            let u = best.inv();
            let (p, dp) = poly::horner_with_derivative(rev, u);
            let u2 = u - p / dp;
            if u2 == ZERO {
                break;
            }
            u2.inv()
        };
        if !(cand.re.is_finite() && cand.im.is_finite()) {
            break;
        }
        let res = residual(cand);
        if res < best_res {
            best = cand;
            best_res = res;
        } else {
            break;
        }
    }
    best
}

fn check_reduced(num: &Polynomial, den: &Polynomial) -> Result<(), MapError> {
    if num.degree() == 0 || den.degree() == 0 {
        return Ok(());
    }
    let (small, other) = if num.degree() <= den.degree() {
        (num, den)
    } else {
        (den, num)
    };
    let roots = poly_roots(small)?;
    let other_roots = poly_roots(other)?;
    for r in &roots {
        for s in &other_roots {
            let scale = r.value.norm().max(1.0);
            if (r.value - s.value).norm() < REDUCTION_TOL * scale {
                return Err(MapError::NotReduced(r.value));
            }
        }
    }
    Ok(())
}

/// A critical point with its local degree `μ(c)` and Julia classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: SpherePoint,
    pub local_degree: usize,
    pub in_julia: bool,
    pub verdict: JuliaVerdict,
}

/// `Crit(f)` with the classification `Crit′(f) = Crit(f) ∩ J(f)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub entries: Vec<CriticalPoint>,
}

impl CriticalSet {
    /// `max μ(c)` over `Crit′(f)`; `None` when `Crit′(f)` is empty.
    pub fn mu_max(&self) -> Option<usize> {
        self.julia_critical().map(|c| c.local_degree).max()
    }

    pub fn julia_critical(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.entries.iter().filter(|c| c.in_julia)
    }

    pub fn julia_points(&self) -> Vec<SpherePoint> {
        self.julia_critical().map(|c| c.point).collect()
    }

    pub fn all_points(&self) -> Vec<SpherePoint> {
        self.entries.iter().map(|c| c.point).collect()
    }

    pub fn has_julia_critical(&self) -> bool {
        self.entries.iter().any(|c| c.in_julia)
    }

    /// `Σ (μ(c) − 1)`, equal to `2d − 2` by Riemann–Hurwitz.
    pub fn ramification_total(&self) -> usize {
        self.entries.iter().map(|c| c.local_degree - 1).sum()
    }

    /// Entry whose point is within `tol` (chordal) of `p`.
    pub fn find(&self, p: SpherePoint, tol: f64) -> Option<&CriticalPoint> {
        self.entries
            .iter()
            .find(|c| chordal_dist(c.point, p) <= tol)
    }

    /// Undecided classifications, which default to `in_julia = true`.
    pub fn warnings(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter_map(|c| match &c.verdict {
                JuliaVerdict::Undecided { horizon } => Some(format!(
                    "critical point {:?}: Julia membership undecided after {horizon} iterations; assumed in J",
                    c.point
                )),
                JuliaVerdict::Cycle { indifferent: true, period, .. } => Some(format!(
                    "critical point {:?}: orbit reaches a cycle of period {period} with multiplier modulus within 1e-6 of 1 (parabolic suspicion)",
                    c.point
                )),
                _ => None,
            })
            .collect()
    }
}

/// Critical points of `f` with local degrees; every entry starts as
/// unclassified (`in_julia = true`, verdict `Unclassified`).
pub fn critical_points(f: &RationalMap) -> CriticalSet {
    CriticalSet {
        entries: f
            .critical
            .iter()
            .map(|&(point, local_degree)| CriticalPoint {
                point,
                local_degree,
                in_julia: true,
                verdict: JuliaVerdict::Unclassified,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chebyshev() -> RationalMap {
        RationalMap::polynomial_real(&[-2.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn rejects_low_degree_and_unreduced() {
        assert_eq!(
            RationalMap::polynomial_real(&[1.0, 2.0]).unwrap_err(),
            MapError::DegreeTooLow(1)
        );
        // (z^2 - 1)/(z - 1) shares the root 1
        let err = RationalMap::new(
            Polynomial::from_real(&[-1.0, 0.0, 1.0]),
            Polynomial::from_real(&[-1.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, MapError::NotReduced(_)));
        assert_eq!(
            RationalMap::new(Polynomial::from_real(&[1.0, 0.0, 1.0]), Polynomial::from_real(&[0.0]))
                .unwrap_err(),
            MapError::ZeroDenominator
        );
    }

    #[test]
    fn eval_examples() {
        let f = chebyshev();
        assert_eq!(f.eval(SpherePoint::real(2.0)), SpherePoint::real(2.0));
        assert_eq!(f.eval(SpherePoint::Infinity), SpherePoint::Infinity);
        // 1/z^2 has a pole at 0
        let g = RationalMap::new(Polynomial::from_real(&[1.0]), Polynomial::from_real(&[0.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(g.eval(SpherePoint::ZERO), SpherePoint::Infinity);
        assert_eq!(g.eval(SpherePoint::Infinity), SpherePoint::ZERO);
        // (z^2 + 1)/z at 0 and ∞
        let h = RationalMap::new(Polynomial::from_real(&[1.0, 0.0, 1.0]), Polynomial::from_real(&[0.0, 1.0]))
            .unwrap();
        assert_eq!(h.eval(SpherePoint::ZERO), SpherePoint::Infinity);
        assert_eq!(h.eval(SpherePoint::Infinity), SpherePoint::Infinity);
        let v = h.eval(SpherePoint::real(2.0)).finite().unwrap();
        assert_relative_eq!(v.re, 2.5, epsilon = 1e-15);
    }

    #[test]
    fn spherical_derivative_examples() {
        let f = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.spherical_deriv(SpherePoint::Infinity), 0.0);
        let g = RationalMap::new(
            Polynomial::new(vec![Complex::new(0.0, 1.0), ZERO, Complex::new(1.0, 0.0)]),
            Polynomial::from_real(&[1.0]),
        )
        .unwrap();
        assert_eq!(g.spherical_deriv(SpherePoint::ZERO), 0.0);
        assert_relative_eq!(chebyshev().spherical_deriv(SpherePoint::real(2.0)), 4.0, epsilon = 1e-14);
        assert_relative_eq!(chebyshev().spherical_deriv(SpherePoint::real(-2.0)), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn critical_points_examples() {
        let crit = chebyshev().critical_points_raw().to_vec();
        assert_eq!(crit, vec![(SpherePoint::ZERO, 2), (SpherePoint::Infinity, 2)]);

        let f = RationalMap::polynomial_real(&[0.0, -3.0, 0.0, 1.0]).unwrap();
        let crit = f.critical_points_raw();
        assert_eq!(crit.len(), 3);
        assert!(chordal_dist(crit[0].0, SpherePoint::real(-1.0)) < 1e-12 && crit[0].1 == 2);
        assert!(chordal_dist(crit[1].0, SpherePoint::real(1.0)) < 1e-12 && crit[1].1 == 2);
        assert_eq!(crit[2], (SpherePoint::Infinity, 3));

        let f = RationalMap::polynomial_real(&[0.0, 0.0, 0.0, -4.0, 3.0]).unwrap();
        let crit = f.critical_points_raw();
        assert_eq!(crit[0], (SpherePoint::ZERO, 3));
        assert!(chordal_dist(crit[1].0, SpherePoint::real(1.0)) < 1e-12 && crit[1].1 == 2);
        assert_eq!(crit[2], (SpherePoint::Infinity, 4));
        let cs = critical_points(&f);
        assert_eq!(cs.ramification_total(), 2 * 4 - 2);
    }

    #[test]
    fn rational_critical_points() {
        // (z^2 + 1)/z: f' = 1 - 1/z^2 vanishes at ±1; poles are simple
        let h = RationalMap::new(Polynomial::from_real(&[1.0, 0.0, 1.0]), Polynomial::from_real(&[0.0, 1.0]))
            .unwrap();
        let cs = critical_points(&h);
        assert_eq!(cs.ramification_total(), 2);
        assert_eq!(cs.entries.len(), 2);
    }

    #[test]
    fn preimage_examples() {
        let f = chebyshev();
        let pre = f.preimages(SpherePoint::real(2.0)).unwrap();
        assert_eq!(pre.len(), 2);
        assert!(chordal_dist(pre[0].0, SpherePoint::real(-2.0)) < 1e-14);
        assert!(chordal_dist(pre[1].0, SpherePoint::real(2.0)) < 1e-14);

        let pre = f.preimages(SpherePoint::real(-2.0)).unwrap();
        assert_eq!(pre, vec![(SpherePoint::ZERO, 2)]);

        let sq = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(sq.preimages(SpherePoint::Infinity).unwrap(), vec![(SpherePoint::Infinity, 2)]);
    }

    #[test]
    fn preimages_near_infinity() {
        let f = chebyshev();
        let z = SpherePoint::new(3e7, -1e7);
        for (w, m) in f.preimages(z).unwrap() {
            assert_eq!(m, 1);
            assert!(chordal_dist(f.eval(w), z) < 1e-12);
        }
    }

    #[test]
    fn fixed_points_of_chebyshev() {
        let fp = chebyshev().fixed_points().unwrap();
        assert_eq!(fp.len(), 3);
        assert!(chordal_dist(fp[0].0, SpherePoint::real(-1.0)) < 1e-14);
        assert!(chordal_dist(fp[1].0, SpherePoint::real(2.0)) < 1e-14);
        assert_eq!(fp[2], (SpherePoint::Infinity, 1));
    }

    #[test]
    fn map_spec_round_trip() {
        let f = chebyshev();
        let json = serde_json_like(&f.spec());
        assert_eq!(json, "[[-2.0, 0.0], [0.0, 0.0], [1.0, 0.0]] / [[1.0, 0.0]]");
        let g = RationalMap::try_from(f.spec()).unwrap();
        assert_eq!(g.degree(), 2);
    }

    fn serde_json_like(s: &MapSpec) -> String {
        format!("{:?} / {:?}", s.numerator, s.denominator)
    }
}
