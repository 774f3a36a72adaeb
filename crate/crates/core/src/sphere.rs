//! Riemann-sphere geometry.
//!
//! Points are handled internally in normalized homogeneous coordinates
//! `[z0 : z1]` with `max(|z0|, |z1|) = 1`, which keeps every evaluation inside
//! a chart of modulus at most one. The chordal metric is normalized so that
//! the sphere has diameter 2, i.e. `σ(0, ∞) = 2`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Complex = Complex64;

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("chordal radius {0} covers the whole sphere (must be < 2)")]
    WholeSphere(f64),
    #[error("chordal radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("complex value is NaN")]
    NotANumber,
}

/// A point of the Riemann sphere.
///
/// Serialized as `[re, im]` for finite points and as the string `"inf"`.
#[derive(Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(Complex),
    Infinity,
}

impl fmt::Debug for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
            SpherePoint::Infinity => write!(f, "∞"),
        }
    }
}

impl SpherePoint {
    pub const ZERO: SpherePoint = SpherePoint::Finite(ZERO);

    /// Builds a point from a complex value; infinite components map to `∞`.
    pub fn try_from_complex(z: Complex) -> Result<Self, SphereError> {
        if z.re.is_nan() || z.im.is_nan() {
            Err(SphereError::NotANumber)
        } else if z.re.is_infinite() || z.im.is_infinite() {
            Ok(SpherePoint::Infinity)
        } else {
            Ok(SpherePoint::Finite(z))
        }
    }

    /// Like [`SpherePoint::try_from_complex`] but panics on NaN.
    pub fn from_complex(z: Complex) -> Self {
        Self::try_from_complex(z).expect("NaN is not a point of the sphere")
    }

    pub fn new(re: f64, im: f64) -> Self {
        Self::from_complex(Complex::new(re, im))
    }

    pub fn real(re: f64) -> Self {
        Self::new(re, 0.0)
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex> {
        match *self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    /// Normalized homogeneous coordinates: `(z, 1)` when `|z| ≤ 1`, otherwise
    /// `(1, 1/z)`, and `(1, 0)` for infinity.
    #[inline]
    pub fn homogeneous(&self) -> (Complex, Complex) {
        match *self {
            SpherePoint::Finite(z) => {
                if z.norm_sqr() <= 1.0 {
                    (z, ONE)
                } else {
                    (ONE, z.inv())
                }
            }
            SpherePoint::Infinity => (ONE, ZERO),
        }
    }

    /// Inverse of [`SpherePoint::homogeneous`] for an arbitrary nonzero pair.
    #[inline]
    pub fn from_homogeneous(z0: Complex, z1: Complex) -> Self {
        if z1 == ZERO {
            debug_assert!(z0 != ZERO, "degenerate homogeneous pair");
            return SpherePoint::Infinity;
        }
        if z0.norm_sqr() > z1.norm_sqr() {
            let u = z1 / z0;
            if u == ZERO {
                SpherePoint::Infinity
            } else {
                SpherePoint::from_complex(u.inv())
            }
        } else {
            SpherePoint::from_complex(z0 / z1)
        }
    }

    /// The diametrically opposite point `−1/z̄`.
    pub fn antipode(&self) -> Self {
        let (z0, z1) = self.homogeneous();
        SpherePoint::from_homogeneous(-z1.conj(), z0.conj())
    }

    /// Coordinates on the unit sphere in R³ (stereographic projection from the
    /// north pole `∞`). Chordal distance equals Euclidean distance here.
    #[inline]
    pub fn to_unit_vector(&self) -> [f64; 3] {
        let (z0, z1) = self.homogeneous();
        let w = z0 * z1.conj();
        let a = z0.norm_sqr();
        let b = z1.norm_sqr();
        let s = a + b;
        [2.0 * w.re / s, 2.0 * w.im / s, (a - b) / s]
    }

    pub fn from_unit_vector(v: [f64; 3]) -> Self {
        let [x, y, z] = v;
        if z >= 0.0 {
            // near the north pole: use the inverted chart 1/w = (x - iy)/(1 + z)
            let u = Complex::new(x, -y) / (1.0 + z);
            if u == ZERO {
                SpherePoint::Infinity
            } else {
                SpherePoint::from_complex(u.inv())
            }
        } else {
            SpherePoint::from_complex(Complex::new(x, y) / (1.0 - z))
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Finite([f64; 2]),
    Named(String),
}

impl Serialize for SpherePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            SpherePoint::Finite(z) => PointRepr::Finite([z.re, z.im]),
            SpherePoint::Infinity => PointRepr::Named("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpherePoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match PointRepr::deserialize(d)? {
            PointRepr::Finite([re, im]) => {
                SpherePoint::try_from_complex(Complex::new(re, im)).map_err(serde::de::Error::custom)
            }
            PointRepr::Named(n) if n == "inf" => Ok(SpherePoint::Infinity),
            PointRepr::Named(n) => Err(serde::de::Error::custom(format!(
                "expected [re, im] or \"inf\", got \"{n}\""
            ))),
        }
    }
}

impl From<Complex> for SpherePoint {
    fn from(z: Complex) -> Self {
        SpherePoint::from_complex(z)
    }
}

impl From<f64> for SpherePoint {
    fn from(x: f64) -> Self {
        SpherePoint::real(x)
    }
}

/// Chordal distance `2|a−b| / √((1+|a|²)(1+|b|²))`, with the limit formula at
/// infinity. Takes values in `[0, 2]`.
#[inline]
pub fn chordal_dist(a: SpherePoint, b: SpherePoint) -> f64 {
    let (a0, a1) = a.homogeneous();
    let (b0, b1) = b.homogeneous();
    let num = (a0 * b1 - a1 * b0).norm();
    let den = ((a0.norm_sqr() + a1.norm_sqr()) * (b0.norm_sqr() + b1.norm_sqr())).sqrt();
    (2.0 * num / den).min(2.0)
}

/// Rotation of the sphere (an element of SU(2) acting by Möbius maps).
/// Rotations are isometries of the chordal metric and holomorphic, so they
/// preserve orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    m: [[Complex; 2]; 2],
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            m: [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    /// The rotation taking `q` to `0` (and the antipode of `q` to `∞`).
    pub fn centering(q: SpherePoint) -> Self {
        let (q0, q1) = q.homogeneous();
        let n = (q0.norm_sqr() + q1.norm_sqr()).sqrt();
        Rotation {
            m: [[q1 / n, -q0 / n], [q0.conj() / n, q1.conj() / n]],
        }
    }

    /// The rotation taking `q` to `∞`.
    pub fn to_infinity(q: SpherePoint) -> Self {
        // centering followed by z ↦ 1/z
        let c = Rotation::centering(q);
        Rotation {
            m: [c.m[1], c.m[0]],
        }
    }

    pub fn inverse(&self) -> Self {
        let m = &self.m;
        // unitary up to a unimodular determinant: inverse is the adjugate / det
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        Rotation {
            m: [
                [m[1][1] / det, -m[0][1] / det],
                [-m[1][0] / det, m[0][0] / det],
            ],
        }
    }

    #[inline]
    pub fn apply(&self, p: SpherePoint) -> SpherePoint {
        let (z0, z1) = p.homogeneous();
        let m = &self.m;
        SpherePoint::from_homogeneous(m[0][0] * z0 + m[0][1] * z1, m[1][0] * z0 + m[1][1] * z1)
    }
}

/// A coordinate chart of the sphere minus one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chart {
    /// `z`
    Standard,
    /// `w = 1/z`
    Inverted,
    /// `w = R(z)` for a rotation `R`
    Rotated(Rotation),
}

impl Chart {
    /// Chart coordinate of `p`, `None` at the chart's pole.
    pub fn coordinate(&self, p: SpherePoint) -> Option<Complex> {
        match self {
            Chart::Standard => p.finite(),
            Chart::Inverted => match p {
                SpherePoint::Infinity => Some(ZERO),
                SpherePoint::Finite(z) if z == ZERO => None,
                SpherePoint::Finite(z) => Some(z.inv()),
            },
            Chart::Rotated(r) => r.apply(p).finite(),
        }
    }

    pub fn point(&self, w: Complex) -> SpherePoint {
        match self {
            Chart::Standard => SpherePoint::from_complex(w),
            Chart::Inverted => {
                if w == ZERO {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::from_complex(w.inv())
                }
            }
            Chart::Rotated(r) => r.inverse().apply(SpherePoint::from_complex(w)),
        }
    }
}

/// Open chordal disk `B(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordalDisk {
    pub center: SpherePoint,
    pub radius: f64,
}

/// A chordal disk seen as a bounded Euclidean disk in some chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartDisk {
    pub center: Complex,
    pub radius: f64,
    pub chart: Chart,
}

impl ChartDisk {
    /// Boundary point at angle `theta`, traversed counterclockwise so that
    /// the disk lies to the left.
    #[inline]
    pub fn boundary_point(&self, theta: f64) -> SpherePoint {
        self.chart
            .point(self.center + Complex::from_polar(self.radius, theta))
    }
}

impl ChordalDisk {
    pub fn new(center: SpherePoint, radius: f64) -> Result<Self, SphereError> {
        if !(radius > 0.0) {
            return Err(SphereError::NonPositiveRadius(radius));
        }
        Ok(ChordalDisk { center, radius })
    }

    pub fn contains(&self, p: SpherePoint) -> bool {
        chordal_dist(self.center, p) < self.radius
    }

    /// Euclidean representation in a chart where the disk is bounded.
    ///
    /// A chordal disk `σ(z, c) < r` is, in the standard chart, the Euclidean
    /// disk with center `c/(1−k)` and radius `√(k(1+|c|²−k))/(1−k)` where
    /// `k = r²(1+|c|²)/4`, provided `k < 1`. The chart with the smaller `k`
    /// among standard and inverted is used; a centered rotated chart is the
    /// fallback when the disk contains both `0` and `∞`.
    pub fn to_chart(&self) -> Result<ChartDisk, SphereError> {
        if self.radius >= 2.0 {
            return Err(SphereError::WholeSphere(self.radius));
        }
        let r2 = self.radius * self.radius;
        let candidates = [
            (Chart::Standard, Chart::Standard.coordinate(self.center)),
            (Chart::Inverted, Chart::Inverted.coordinate(self.center)),
        ];
        let mut best: Option<(Chart, Complex, f64)> = None;
        for (chart, c) in candidates {
            if let Some(c) = c {
                let k = r2 * (1.0 + c.norm_sqr()) / 4.0;
                if best.is_none_or(|(_, _, bk)| k < bk) {
                    best = Some((chart, c, k));
                }
            }
        }
        match best {
            Some((chart, c, k)) if k < 1.0 - 1e-9 => {
                let radius = (k * (1.0 + c.norm_sqr() - k)).sqrt() / (1.0 - k);
                Ok(ChartDisk {
                    center: c / (1.0 - k),
                    radius,
                    chart,
                })
            }
            _ => {
                let chart = Chart::Rotated(Rotation::centering(self.center));
                Ok(ChartDisk {
                    center: ZERO,
                    radius: self.radius / (4.0 - r2).sqrt(),
                    chart,
                })
            }
        }
    }

    /// Recovers the chordal description of a chart disk.
    pub fn from_chart(d: &ChartDisk) -> ChordalDisk {
        // The chordal center is the point whose distance to every boundary
        // point is the same; for a Euclidean circle in the standard chart it
        // lies on the ray through the Euclidean center. Solve via the two
        // boundary points on that ray.
        let dir = if d.center.norm() > 0.0 {
            d.center / d.center.norm()
        } else {
            ONE
        };
        let near = d.chart.point(d.center - dir * d.radius);
        let far = d.chart.point(d.center + dir * d.radius);
        // midpoint of one of the two great-circle arcs between them; the
        // cap center is the one equidistant from a third boundary point
        let a = near.to_unit_vector();
        let b = far.to_unit_vector();
        let side = d.chart.point(d.center + dir * Complex::i() * d.radius);
        let mut m = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        if norm < 1e-15 {
            // hemisphere: center is the pole orthogonal to the boundary plane
            let s = side.to_unit_vector();
            m = [
                a[1] * s[2] - a[2] * s[1],
                a[2] * s[0] - a[0] * s[2],
                a[0] * s[1] - a[1] * s[0],
            ];
            let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            for x in &mut m {
                *x /= n;
            }
        } else {
            for x in &mut m {
                *x /= norm;
            }
        }
        // m and −m bound complementary caps; the disk is the one holding the
        // Euclidean center
        let inside = d.chart.point(d.center);
        let candidate = SpherePoint::from_unit_vector(m);
        let m = if chordal_dist(candidate, inside) < chordal_dist(candidate, near) {
            m
        } else {
            [-m[0], -m[1], -m[2]]
        };
        let center = SpherePoint::from_unit_vector(m);
        ChordalDisk {
            center,
            radius: chordal_dist(center, near),
        }
    }
}

/// Spherical derivative `|f′(z)|(1+|z|²)/(1+|f(z)|²)` of a map given through
/// a homogeneous lift `F = (P̂, Q̂)` of degree `d`:
/// `f#(z) = |det DF(Z)| ‖Z‖² / (d ‖F(Z)‖²)`.
#[inline]
pub(crate) fn spherical_deriv_homogeneous(
    z: (Complex, Complex),
    value: (Complex, Complex),
    jacobian_det: Complex,
    degree: usize,
) -> f64 {
    let zz = z.0.norm_sqr() + z.1.norm_sqr();
    let ff = value.0.norm_sqr() + value.1.norm_sqr();
    jacobian_det.norm() * zz / (degree as f64 * ff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chordal_examples() {
        let z = SpherePoint::new(0.3, -1.7);
        assert_eq!(chordal_dist(z, z), 0.0);
        assert_relative_eq!(
            chordal_dist(SpherePoint::ZERO, SpherePoint::Infinity),
            2.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            chordal_dist(SpherePoint::new(0.0, 1.0), SpherePoint::ZERO),
            2.0_f64.sqrt(),
            epsilon = 1e-15
        );
        // direct formula for large arguments
        let a = SpherePoint::real(1e200);
        assert_relative_eq!(chordal_dist(a, SpherePoint::Infinity), 2e-200, max_relative = 1e-12);
    }

    #[test]
    fn antipode_is_at_distance_two() {
        for p in [
            SpherePoint::new(0.2, 0.1),
            SpherePoint::new(-3.0, 4.0),
            SpherePoint::ZERO,
            SpherePoint::Infinity,
        ] {
            assert_relative_eq!(chordal_dist(p, p.antipode()), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn unit_vector_round_trip() {
        for p in [
            SpherePoint::new(0.2, 0.1),
            SpherePoint::new(-3.0, 4.0),
            SpherePoint::Infinity,
            SpherePoint::ZERO,
        ] {
            let q = SpherePoint::from_unit_vector(p.to_unit_vector());
            assert!(chordal_dist(p, q) < 1e-14);
        }
    }

    #[test]
    fn rotations_are_isometries() {
        let q = SpherePoint::new(0.7, -2.0);
        let r = Rotation::centering(q);
        assert!(chordal_dist(r.apply(q), SpherePoint::ZERO) < 1e-14);
        assert!(chordal_dist(r.apply(q.antipode()), SpherePoint::Infinity) < 1e-14);
        let a = SpherePoint::new(1.0, 1.0);
        let b = SpherePoint::new(-0.5, 3.0);
        assert_relative_eq!(
            chordal_dist(r.apply(a), r.apply(b)),
            chordal_dist(a, b),
            epsilon = 1e-14
        );
        assert!(chordal_dist(r.inverse().apply(r.apply(a)), a) < 1e-14);
        let t = Rotation::to_infinity(q);
        assert!(t.apply(q).is_infinity() || chordal_dist(t.apply(q), SpherePoint::Infinity) < 1e-14);
    }

    #[test]
    fn chart_disk_centered_at_zero() {
        // σ(0, 0.5) = 1/√1.25
        let r = 1.0 / 1.25_f64.sqrt();
        let d = ChordalDisk::new(SpherePoint::ZERO, r).unwrap().to_chart().unwrap();
        assert_eq!(d.chart, Chart::Standard);
        assert_relative_eq!(d.radius, 0.5, epsilon = 1e-9);
        assert_eq!(d.center, ZERO);
        assert_relative_eq!(
            chordal_dist(SpherePoint::ZERO, SpherePoint::real(0.5)),
            r,
            epsilon = 1e-15
        );
    }

    #[test]
    fn chart_disk_at_infinity_uses_inverted_chart() {
        let d = ChordalDisk::new(SpherePoint::Infinity, 1.0)
            .unwrap()
            .to_chart()
            .unwrap();
        assert_eq!(d.chart, Chart::Inverted);
        assert_eq!(d.center, ZERO);
        let s = ChordalDisk::new(SpherePoint::ZERO, 1.0)
            .unwrap()
            .to_chart()
            .unwrap();
        assert_relative_eq!(d.radius, s.radius, epsilon = 1e-15);
    }

    #[test]
    fn whole_sphere_is_rejected() {
        let d = ChordalDisk::new(SpherePoint::ZERO, 2.0).unwrap();
        assert_eq!(d.to_chart(), Err(SphereError::WholeSphere(2.0)));
        assert!(ChordalDisk::new(SpherePoint::ZERO, 0.0).is_err());
    }

    #[test]
    fn big_disk_falls_back_to_rotated_chart() {
        let disk = ChordalDisk::new(SpherePoint::real(1.0), 1.9).unwrap();
        let d = disk.to_chart().unwrap();
        assert!(matches!(d.chart, Chart::Rotated(_)));
        for k in 0..16 {
            let b = d.boundary_point(k as f64 * 0.4);
            assert_relative_eq!(chordal_dist(b, disk.center), 1.9, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_points_lie_on_the_chordal_circle() {
        for (c, r) in [
            (SpherePoint::new(0.3, 0.4), 0.2),
            (SpherePoint::new(-5.0, 1.0), 0.7),
            (SpherePoint::new(2.0, 0.0), 1.2),
        ] {
            let disk = ChordalDisk::new(c, r).unwrap();
            let d = disk.to_chart().unwrap();
            for k in 0..32 {
                let b = d.boundary_point(k as f64 * std::f64::consts::PI / 16.0);
                assert_relative_eq!(chordal_dist(b, c), r, epsilon = 1e-12);
            }
            let back = ChordalDisk::from_chart(&d);
            assert!(chordal_dist(back.center, c) < 1e-12);
            assert_relative_eq!(back.radius, r, epsilon = 1e-12);
        }
    }
}
