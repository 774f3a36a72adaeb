//! Pullback components by inverse-branch curve lifting.
//!
//! The boundary of `Comp_w f^{−n}(B(x, r))` is obtained by continuing the
//! inverse branches of `f` along the circle `∂B(x, r)`. Continuation is done
//! for the whole chain `f^{n−1}(w), …, f(w), w` at once: every accepted step
//! on the base circle is lifted level by level, each time picking the
//! preimage closest to the previous point on that level. A side effect is
//! that one lift to depth `n` yields the boundaries at all depths `k ≤ n`.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backward::{Scale, ShrinkingSchedule};
use crate::orbit::{ce_exponent, regression_slope, tail_window, OrbitError};
use crate::ratmap::{CriticalSet, MapError, RationalMap};
use crate::rng;
use crate::sphere::{chordal_dist, ChordalDisk, Complex, Rotation, SphereError, SpherePoint};

pub const CLOSURE_TOL: f64 = 1e-8;
/// A step is refused when the nearest preimage is not at least this many
/// times closer than the second nearest.
pub const AMBIGUITY_RATIO: f64 = 3.0;
/// Smallest admissible step is one loop divided by this.
pub const STEP_FLOOR_DIVISOR: f64 = (1u64 << 20) as f64;
pub const MIN_SAMPLES: usize = 64;
pub const ON_CURVE_TOL: f64 = 1e-9;
/// Chain points this close to a critical point are lifted without the
/// ambiguity test (every nearby preimage is equally valid).
const CRITICAL_START_TOL: f64 = 1e-6;
const EXACT_DIAMETER_MAX: usize = 4096;
const DIAMETER_BLOCK: usize = 64;
/// Candidate directions for the radial path to the base circle.
const RADIAL_DIRECTIONS: usize = 16;
/// The radial path may start next to a critical value, so its steps are
/// allowed to shrink much further than those on the circle.
const RADIAL_STEP_FLOOR: f64 = 1e-15;
/// Fraction of failed lifts above which an estimate is marked unreliable.
const UNRELIABLE_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("lift did not close after {loops} loops (gap {gap:e})")]
    NotClosed { loops: usize, gap: f64 },
    #[error("step underflow at level {level} near {at:?}: boundary passes through a critical value")]
    StepUnderflow { level: usize, at: SpherePoint },
    #[error("point lies within {distance:e} of the curve")]
    OnCurve { distance: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

/// Closed polyline bounding `Comp_w f^{−level}(base)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiftedCurve {
    pub vertices: Vec<SpherePoint>,
    pub level: usize,
    pub base: ChordalDisk,
    pub base_preimage: SpherePoint,
    /// Traversals of the base circle needed to close the curve.
    pub loops: usize,
}

impl LiftedCurve {
    pub fn diameter(&self) -> f64 {
        curve_diameter(self)
    }

    pub fn contains(&self, p: SpherePoint) -> Result<bool, CoverError> {
        point_in_component(self, p)
    }

    /// Chordal distance from `p` to the polyline.
    pub fn distance_to(&self, p: SpherePoint) -> f64 {
        polyline_distance(&unit_vectors(&self.vertices), p.to_unit_vector())
    }
}

struct Lifter<'a> {
    f: &'a RationalMap,
    crit: Vec<SpherePoint>,
}

enum Step {
    Accepted(Vec<SpherePoint>),
    Ambiguous(usize),
}

impl<'a> Lifter<'a> {
    fn new(f: &'a RationalMap) -> Self {
        Lifter {
            f,
            crit: f.critical_points_raw().iter().map(|c| c.0).collect(),
        }
    }

    fn near_critical(&self, p: SpherePoint) -> bool {
        self.crit.iter().any(|&c| chordal_dist(c, p) < CRITICAL_START_TOL)
    }

    /// Lifts the chain to a new base point.
    fn step(&self, chain: &[SpherePoint], base: SpherePoint) -> Result<Step, MapError> {
        let mut next = Vec::with_capacity(chain.len());
        next.push(base);
        for j in 1..chain.len() {
            let prev = chain[j];
            let mut best = (f64::INFINITY, SpherePoint::Infinity);
            let mut second = f64::INFINITY;
            for (p, _) in self.f.preimages(next[j - 1])? {
                let d = chordal_dist(p, prev);
                if d < best.0 {
                    second = best.0;
                    best = (d, p);
                } else if d < second {
                    second = d;
                }
            }
            if AMBIGUITY_RATIO * best.0 > second && !self.near_critical(prev) {
                return Ok(Step::Ambiguous(j));
            }
            next.push(best.1);
        }
        Ok(Step::Accepted(next))
    }

    /// Continues `chain` along `path(t)` for `t ∈ [t0, t1]`, calling `visit`
    /// after every accepted step.
    fn advance(
        &self,
        chain: &mut Vec<SpherePoint>,
        path: impl Fn(f64) -> SpherePoint,
        (t0, t1): (f64, f64),
        (h0, hmin): (f64, f64),
        mut visit: impl FnMut(&[SpherePoint]),
    ) -> Result<(), CoverError> {
        let mut t = t0;
        let mut h = h0;
        while t < t1 {
            let tn = (t + h).min(t1);
            match self.step(chain, path(tn))? {
                Step::Accepted(next) => {
                    *chain = next;
                    t = tn;
                    visit(chain);
                    h = (2.0 * h).min(h0);
                }
                Step::Ambiguous(level) => {
                    h *= 0.5;
                    if h < hmin {
                        return Err(CoverError::StepUnderflow {
                            level,
                            at: chain[level],
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Boundary curves of `Comp_{f^{n−k}(w)} f^{−k}(disk)` for `k = 0..=n`.
///
/// `samples` is the number of steps per traversal of the base circle before
/// adaptive refinement.
pub fn lift_tower(
    f: &RationalMap,
    disk: ChordalDisk,
    w: SpherePoint,
    n: usize,
    samples: usize,
) -> Result<Vec<LiftedCurve>, CoverError> {
    if samples < MIN_SAMPLES {
        return Err(CoverError::Precondition(format!(
            "samples must be ≥ {MIN_SAMPLES}, got {samples}"
        )));
    }
    let cd = disk.to_chart()?;
    let mut chain = vec![w; n + 1];
    for j in (0..n).rev() {
        chain[j] = f.eval(chain[j + 1]);
    }
    let dist = chordal_dist(chain[0], disk.center);
    if dist > disk.radius * (1.0 + 1e-9) {
        return Err(CoverError::Precondition(format!(
            "f^{n}(w) lies at distance {dist} from the center, outside radius {}",
            disk.radius
        )));
    }
    let preimages_at_start = chain.clone();
    let u0 = cd
        .chart
        .coordinate(chain[0])
        .ok_or_else(|| CoverError::Precondition("base point at the chart pole".into()))?;
    let lifter = Lifter::new(f);
    let ds = cd.radius * TAU / samples as f64;

    // radial path from f^n(w) out to the boundary circle, in the direction
    // that keeps farthest from the critical values of f, …, f^n
    let mut post_critical = Vec::new();
    for &c in &lifter.crit {
        let mut v = c;
        for _ in 0..n {
            v = f.eval(v);
            if let Some(u) = cd.chart.coordinate(v) {
                post_critical.push(u);
            }
        }
    }
    let offset = u0 - cd.center;
    let natural = if offset.norm() > 0.0 { offset.arg() } else { 0.0 };
    let clearance = |theta: f64| {
        let end = cd.center + Complex::from_polar(cd.radius, theta);
        post_critical
            .iter()
            .map(|&v| segment_distance(u0, end, v))
            .fold(f64::INFINITY, f64::min)
    };
    let theta0 = (0..RADIAL_DIRECTIONS)
        .map(|i| natural + TAU * i as f64 / RADIAL_DIRECTIONS as f64)
        .map(|th| (clearance(th), th))
        .fold((f64::NEG_INFINITY, natural), |a, b| if b.0 > a.0 { b } else { a })
        .1;
    let end = cd.center + Complex::from_polar(cd.radius, theta0);
    let len = (end - u0).norm();
    if len > 0.0 {
        let h0 = (ds / len).min(1.0);
        let hmin = RADIAL_STEP_FLOOR;
        lifter.advance(
            &mut chain,
            |t| cd.chart.point(u0 + (end - u0) * t),
            (0.0, 1.0),
            (h0, hmin),
            |_| {},
        )?;
    }

    let start = chain.clone();
    let mut vertices: Vec<Vec<SpherePoint>> = start.iter().map(|&p| vec![p]).collect();
    let mut loops: Vec<Option<usize>> = vec![None; n + 1];
    let max_loops = (f.degree() as u64)
        .checked_pow(n as u32)
        .map_or(usize::MAX, |v| v.min(usize::MAX as u64) as usize);
    let h0 = TAU / samples as f64;
    let hmin = TAU / STEP_FLOOR_DIVISOR;
    let mut lap = 0;
    while loops[n].is_none() {
        if lap == max_loops {
            return Err(CoverError::NotClosed {
                loops: lap,
                gap: chordal_dist(chain[n], start[n]),
            });
        }
        let from = theta0 + TAU * lap as f64;
        lifter.advance(
            &mut chain,
            |th| cd.boundary_point(th),
            (from, from + TAU),
            (h0, hmin),
            |c| {
                for (k, v) in vertices.iter_mut().enumerate() {
                    if loops[k].is_none() {
                        v.push(c[k]);
                    }
                }
            },
        )?;
        lap += 1;
        for k in 0..=n {
            if loops[k].is_none() && chordal_dist(chain[k], start[k]) < CLOSURE_TOL {
                loops[k] = Some(lap);
            }
        }
    }
    Ok(vertices
        .into_iter()
        .enumerate()
        .map(|(k, v)| LiftedCurve {
            vertices: v,
            level: k,
            base: disk,
            base_preimage: preimages_at_start[k],
            loops: loops[k].expect("lower levels close no later than the top level"),
        })
        .collect())
}

/// Boundary of `Comp_w f^{−n}(disk)`.
pub fn lift_circle(
    f: &RationalMap,
    disk: ChordalDisk,
    w: SpherePoint,
    n: usize,
    samples: usize,
) -> Result<LiftedCurve, CoverError> {
    Ok(lift_tower(f, disk, w, n, samples)?.pop().expect("tower is never empty"))
}

fn segment_distance(a: Complex, b: Complex, p: Complex) -> f64 {
    let ab = b - a;
    let t = if ab.norm_sqr() > 0.0 {
        ((p - a) * ab.conj()).re / ab.norm_sqr()
    } else {
        0.0
    };
    (a + ab * t.clamp(0.0, 1.0) - p).norm()
}

fn unit_vectors(pts: &[SpherePoint]) -> Vec<[f64; 3]> {
    pts.iter().map(SpherePoint::to_unit_vector).collect()
}

#[inline]
fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (x * x + y * y + z * z).sqrt()
}

/// Chordal distance is Euclidean distance of unit vectors in R³.
fn polyline_distance(vs: &[[f64; 3]], p: [f64; 3]) -> f64 {
    if vs.len() == 1 {
        return dist3(&vs[0], &p);
    }
    vs.windows(2)
        .map(|e| {
            let (a, b) = (e[0], e[1]);
            let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
            let t = if len2 > 0.0 {
                ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            dist3(&[a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]], &p)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Chordal diameter of a lifted component (equal to that of its boundary).
pub fn curve_diameter(c: &LiftedCurve) -> f64 {
    point_set_diameter(&c.vertices)
}

pub fn point_set_diameter(pts: &[SpherePoint]) -> f64 {
    if pts.len() <= EXACT_DIAMETER_MAX {
        diameter_exact(pts)
    } else {
        diameter_accelerated(pts)
    }
}

/// All-pairs maximum.
pub fn diameter_exact(pts: &[SpherePoint]) -> f64 {
    let v = unit_vectors(pts);
    (0..v.len())
        .into_par_iter()
        .map(|i| v[i + 1..].iter().map(|b| dist3(&v[i], b)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// Branch and bound over axis-aligned boxes of consecutive vertices in R³.
/// Exact: a block pair is skipped only when its box bound cannot beat the
/// current maximum.
pub fn diameter_accelerated(pts: &[SpherePoint]) -> f64 {
    let v = unit_vectors(pts);
    if v.len() < 2 {
        return 0.0;
    }
    let boxes: Vec<([f64; 3], [f64; 3])> = v
        .chunks(DIAMETER_BLOCK)
        .map(|ch| {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for p in ch {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            (lo, hi)
        })
        .collect();
    // two farthest-point sweeps seed the lower bound
    let far = |from: &[f64; 3]| {
        v.iter()
            .enumerate()
            .map(|(i, p)| (i, dist3(from, p)))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
    };
    let (i1, _) = far(&v[0]);
    let (_, mut best) = far(&v[i1]);
    let upper = |a: usize, b: usize| {
        let (la, ha) = boxes[a];
        let (lb, hb) = boxes[b];
        (0..3)
            .map(|k| {
                let s = (ha[k] - lb[k]).abs().max((hb[k] - la[k]).abs());
                s * s
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut pairs: Vec<(f64, usize, usize)> = (0..boxes.len())
        .flat_map(|a| (a..boxes.len()).map(move |b| (a, b)))
        .map(|(a, b)| (upper(a, b), a, b))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (ub, a, b) in pairs {
        if ub <= best {
            break;
        }
        let ba = &v[a * DIAMETER_BLOCK..((a + 1) * DIAMETER_BLOCK).min(v.len())];
        let bb = &v[b * DIAMETER_BLOCK..((b + 1) * DIAMETER_BLOCK).min(v.len())];
        for p in ba {
            for q in bb {
                best = best.max(dist3(p, q));
            }
        }
    }
    best
}

/// Whether `p` lies in the component bounded by `c`.
///
/// The curve is traversed once with the component on its left. In a chart
/// sending a point far from the curve to `∞`, the component is the bounded
/// side if the curve runs counterclockwise and the unbounded side otherwise;
/// the winding number of the curve around `p` decides.
pub fn point_in_component(c: &LiftedCurve, p: SpherePoint) -> Result<bool, CoverError> {
    let vs = unit_vectors(&c.vertices);
    let pv = p.to_unit_vector();
    let distance = polyline_distance(&vs, pv);
    if distance < ON_CURVE_TOL {
        return Err(CoverError::OnCurve { distance });
    }
    if vs.len() < 3 {
        return Ok(false);
    }
    let axes = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [-pv[0], -pv[1], -pv[2]],
    ];
    let pole = axes
        .iter()
        .map(|q| {
            let clearance = vs
                .iter()
                .map(|v| dist3(v, q))
                .fold(dist3(&pv, q), f64::min);
            (clearance, *q)
        })
        .fold((f64::NEG_INFINITY, axes[0]), |a, b| if b.0 > a.0 { b } else { a })
        .1;
    let rot = Rotation::to_infinity(SpherePoint::from_unit_vector(pole));
    let coord = |q: SpherePoint| {
        rot.apply(q)
            .finite()
            .expect("pole is bounded away from every point used")
    };
    let pts: Vec<Complex> = c.vertices.iter().map(|&q| coord(q)).collect();
    let pc = coord(p);
    let mut area = 0.0;
    let mut angle = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        area += a.re * b.im - a.im * b.re;
        angle += ((b - pc) / (a - pc)).arg();
    }
    let winding = (angle / TAU).round() as i64;
    let ccw = area > 0.0;
    Ok(winding >= i64::from(ccw))
}

/// Fixed points with spherical multiplier `> 1`.
pub fn repelling_fixed_points(f: &RationalMap) -> Result<Vec<SpherePoint>, CoverError> {
    Ok(f.fixed_points()?
        .into_iter()
        .filter(|&(p, m)| m == 1 && f.spherical_deriv(p) > 1.0 + 1e-9)
        .map(|(p, _)| p)
        .collect())
}

/// Approximate sample of `J(f)` by random inverse iteration from a repelling
/// fixed point; every repelling fixed point is included.
pub fn julia_sample(f: &RationalMap, count: usize, seed: u64) -> Result<Vec<SpherePoint>, CoverError> {
    let fixed = repelling_fixed_points(f)?;
    let Some(&start) = fixed.first() else {
        return Err(CoverError::Domain("no repelling fixed point to start inverse iteration".into()));
    };
    let mut rng = rng::stream(seed, 0);
    let mut out = fixed.clone();
    let mut z = start;
    while out.len() < count.max(fixed.len()) {
        z = random_preimage(f, z, &mut rng)?;
        out.push(z);
    }
    Ok(out)
}

fn random_preimage(f: &RationalMap, z: SpherePoint, rng: &mut impl Rng) -> Result<SpherePoint, MapError> {
    let pre = f.preimages(z)?;
    let mut k = rng.gen_range(0..f.degree());
    for (p, m) in pre {
        if k < m {
            return Ok(p);
        }
        k -= m;
    }
    unreachable!("preimage multiplicities sum to the degree")
}

fn nearest_preimage(f: &RationalMap, z: SpherePoint, target: SpherePoint) -> Result<SpherePoint, MapError> {
    Ok(f.preimages(z)?
        .into_iter()
        .map(|(p, _)| (chordal_dist(p, target), p))
        .fold((f64::INFINITY, SpherePoint::Infinity), |a, b| if b.0 < a.0 { b } else { a })
        .1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    /// Uniformly random preimage at every step.
    Random,
    /// The preimage closest to the current point.
    Nearest,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpShrinkParams {
    pub r: f64,
    pub depth: usize,
    pub base_samples: usize,
    pub branch_samples: usize,
    pub curve_samples: usize,
    /// Use this single base point instead of a Julia sample.
    pub anchor: Option<SpherePoint>,
    pub branch_mode: BranchMode,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpShrinkEstimate {
    pub lambda_exp: f64,
    pub r_exp: f64,
    /// Index `n` holds the largest component diameter seen at depth `n`.
    pub per_n_max_diam: Vec<f64>,
    /// Smallest `C` with `per_n_max_diam[n] ≤ C·lambda_exp^{−n}` for all `n`.
    pub constant: f64,
    pub attempts: usize,
    pub failures: usize,
    pub unreliable: bool,
}

/// Exponential shrinking rate of pullback components of `B(x, r)`, `x ∈ J`.
pub fn expshrink_estimate(f: &RationalMap, params: &ExpShrinkParams) -> Result<ExpShrinkEstimate, CoverError> {
    let n = params.depth;
    if n < 2 {
        return Err(CoverError::Precondition(format!("depth must be ≥ 2, got {n}")));
    }
    if !(params.r > 0.0 && params.r < 2.0) {
        return Err(CoverError::Precondition(format!("radius must lie in (0, 2), got {}", params.r)));
    }
    let bases = match params.anchor {
        Some(x) => vec![x],
        None => julia_sample(f, params.base_samples.max(1), params.seed)?,
    };
    let branches = params.branch_samples.max(1);
    let jobs: Vec<(usize, usize)> = (0..bases.len())
        .flat_map(|b| (0..branches).map(move |s| (b, s)))
        .collect();
    let results: Vec<Result<Vec<f64>, CoverError>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(b, _))| {
            let x = bases[b];
            let mut rng = rng::stream(params.seed, 1 + job as u64);
            let mut w = x;
            for _ in 0..n {
                w = match params.branch_mode {
                    BranchMode::Random => random_preimage(f, w, &mut rng)?,
                    BranchMode::Nearest => nearest_preimage(f, w, w)?,
                };
            }
            let disk = ChordalDisk::new(x, params.r)?;
            let tower = lift_tower(f, disk, w, n, params.curve_samples)?;
            Ok(tower.iter().map(curve_diameter).collect())
        })
        .collect();
    let mut per_n = vec![0.0f64; n + 1];
    let mut failures = 0;
    for r in &results {
        match r {
            Ok(d) => {
                for (acc, &x) in per_n.iter_mut().zip(d) {
                    *acc = acc.max(x);
                }
            }
            Err(_) => failures += 1,
        }
    }
    if failures == results.len() {
        let first = results.into_iter().find_map(Result::err);
        return Err(first.expect("at least one job"));
    }
    let xs: Vec<f64> = tail_window(n).map(|k| k as f64).collect();
    let ys: Vec<f64> = tail_window(n).map(|k| -per_n[k].ln()).collect();
    let slope = regression_slope(&xs, &ys)
        .ok_or_else(|| CoverError::Domain("degenerate diameter series".into()))?;
    let lambda_exp = slope.exp();
    let constant = per_n
        .iter()
        .enumerate()
        .map(|(k, d)| d * lambda_exp.powi(k as i32))
        .fold(0.0, f64::max);
    Ok(ExpShrinkEstimate {
        lambda_exp,
        r_exp: params.r,
        per_n_max_diam: per_n,
        constant,
        attempts: results.len(),
        failures,
        unreliable: failures as f64 > UNRELIABLE_FRACTION * results.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TceParams {
    pub m: i64,
    pub p: usize,
    pub r: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TceResult {
    pub pass: bool,
    /// Accepted times `n_1 < n_2 < …`.
    pub sequence: Vec<usize>,
    /// Critical-component count for each accepted `n_j`.
    pub counts: Vec<usize>,
    /// Count for every scanned candidate `n` (`None` if lifting failed).
    pub candidate_counts: Vec<Option<usize>>,
    pub required: usize,
    pub warnings: Vec<String>,
}

/// Distance below which `z` counts as lying on the sampled Julia set.
pub const JULIA_MEMBERSHIP_TOL: f64 = 1e-6;
const JULIA_CHECK_SAMPLES: usize = 4096;

/// Number of `k < n` for which `Comp_{f^k(z)} f^{−(n−k)}(B(f^n(z), r))`
/// meets `Crit`. Boundary-ambiguous memberships count as meeting and are
/// reported in `warnings`.
pub fn critical_component_count(
    f: &RationalMap,
    z: SpherePoint,
    n: usize,
    r: f64,
    samples: usize,
    warnings: &mut Vec<String>,
) -> Result<usize, CoverError> {
    let base = ChordalDisk::new(f.iterate(z, n), r)?;
    let tower = lift_tower(f, base, z, n, samples)?;
    let crit: Vec<SpherePoint> = f.critical_points_raw().iter().map(|c| c.0).collect();
    let mut count = 0;
    for k in 0..n {
        let curve = &tower[n - k];
        let mut hit = false;
        for &c in &crit {
            match point_in_component(curve, c) {
                Ok(true) => hit = true,
                Ok(false) => {}
                Err(CoverError::OnCurve { distance }) => {
                    warnings.push(format!(
                        "n = {n}, k = {k}: critical point {c:?} within {distance:e} of the boundary, counted as inside"
                    ));
                    hit = true;
                }
                Err(e) => return Err(e),
            }
        }
        count += usize::from(hit);
    }
    Ok(count)
}

/// Greedy finite-horizon TCE test.
pub fn tce_check(
    f: &RationalMap,
    z: SpherePoint,
    params: TceParams,
    horizon: usize,
    samples: usize,
    julia: Option<&[SpherePoint]>,
) -> Result<TceResult, CoverError> {
    if params.m < 0 {
        return Err(CoverError::Precondition(format!("M must be ≥ 0, got {}", params.m)));
    }
    if params.p == 0 {
        return Err(CoverError::Precondition("P must be ≥ 1".into()));
    }
    if horizon < params.p {
        return Err(CoverError::Precondition(format!("horizon {horizon} is smaller than P = {}", params.p)));
    }
    if !(params.r > 0.0 && params.r < 2.0) {
        return Err(CoverError::Precondition(format!("radius must lie in (0, 2), got {}", params.r)));
    }
    let owned;
    let sample = match julia {
        Some(s) => s,
        None => {
            owned = julia_sample(f, JULIA_CHECK_SAMPLES, 0)?;
            &owned
        }
    };
    let gap = sample.iter().map(|&s| chordal_dist(s, z)).fold(f64::INFINITY, f64::min);
    if gap > JULIA_MEMBERSHIP_TOL {
        return Err(CoverError::Precondition(format!(
            "z is {gap:e} away from the sampled Julia set"
        )));
    }
    let m = params.m as usize;
    let mut warnings = Vec::new();
    let mut sequence = Vec::new();
    let mut counts = Vec::new();
    let mut candidate_counts = Vec::new();
    for n in 1..=horizon {
        if n > params.p * (sequence.len() + 1) {
            break;
        }
        match critical_component_count(f, z, n, params.r, samples, &mut warnings) {
            Ok(count) => {
                candidate_counts.push(Some(count));
                if count <= m {
                    sequence.push(n);
                    counts.push(count);
                }
            }
            Err(e) => {
                warnings.push(format!("n = {n}: skipped ({e})"));
                candidate_counts.push(None);
            }
        }
    }
    let required = horizon / params.p;
    Ok(TceResult {
        pass: sequence.len() >= required,
        sequence,
        counts,
        candidate_counts,
        required,
        warnings,
    })
}

/// Diagnostic record for the CE2 ⇒ CE direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ce2CeRecord {
    pub critical_point: SpherePoint,
    /// First `m ≤ n` with `f^m(c) ∈ B(c′, R)`; `None` makes the check vacuous.
    pub m: Option<usize>,
    pub target: Option<SpherePoint>,
    /// `r = 2σ(f^m(c), c′)`.
    pub r: Option<f64>,
    pub half_r_below_scale: bool,
    pub diam_u_m: Option<f64>,
    pub diam_f_u_m: Option<f64>,
    /// `|(f^{m−1})′(f(c))|`
    pub return_derivative: Option<f64>,
    /// Smallest `C` with `diam(f(U_m)) ≥ r / (C·|(f^{m−1})′(f(c))|)`.
    pub koebe_constant: Option<f64>,
    pub exponent: usize,
    pub lambda: f64,
    /// Largest `const` with `|(f^k)′(f(c))| ≥ const·λ^k·diam(U_m)^{exponent}`
    /// for `1 ≤ k ≤ n`.
    pub admissible_const: Option<f64>,
}

pub fn ce2ce_check(
    f: &RationalMap,
    cs: &CriticalSet,
    c: SpherePoint,
    n: usize,
    scale: Scale,
    schedule: &ShrinkingSchedule,
    samples: usize,
) -> Result<Ce2CeRecord, CoverError> {
    let ce = ce_exponent(f, cs, c, n)?;
    let c = ce.critical_point;
    let mu = cs.find(c, 0.0).map_or(1, |e| e.local_degree);
    let mu_max = cs.mu_max().unwrap_or(mu);
    let exponent = mu_max - mu;
    let targets = cs.julia_points();
    let mut rec = Ce2CeRecord {
        critical_point: c,
        m: None,
        target: None,
        r: None,
        half_r_below_scale: false,
        diam_u_m: None,
        diam_f_u_m: None,
        return_derivative: None,
        koebe_constant: None,
        exponent,
        lambda: ce.lambda1,
        admissible_const: None,
    };
    let mut z = c;
    for m in 1..=n {
        z = f.eval(z);
        let (d, t) = targets
            .iter()
            .map(|&t| (chordal_dist(z, t), t))
            .fold((f64::INFINITY, c), |a, b| if b.0 < a.0 { b } else { a });
        if d < scale.r {
            rec.m = Some(m);
            rec.target = Some(t);
            rec.r = Some(2.0 * d);
            rec.half_r_below_scale = true;
            break;
        }
    }
    let (Some(m), Some(r)) = (rec.m, rec.r) else {
        return Ok(rec);
    };
    let radius = r * schedule.delta(m);
    let (diam_u, diam_fu) = if radius >= 2.0 {
        (2.0, 2.0)
    } else {
        let tower = lift_tower(f, ChordalDisk::new(z, radius)?, c, m, samples)?;
        (curve_diameter(&tower[m]), curve_diameter(&tower[m - 1]))
    };
    let deriv = ce.log_deriv.get(m - 1).map_or(f64::NAN, |l| l.exp());
    rec.diam_u_m = Some(diam_u);
    rec.diam_f_u_m = Some(diam_fu);
    rec.return_derivative = Some(deriv);
    rec.koebe_constant = Some(r / (deriv * diam_fu));
    if ce.critical_hit.is_none() {
        let log_lambda = ce.log_lambda1;
        let log_diam = diam_u.ln() * exponent as f64;
        let log_const = (1..ce.log_deriv.len())
            .map(|k| ce.log_deriv[k] - k as f64 * log_lambda - log_diam)
            .fold(f64::INFINITY, f64::min);
        rec.admissible_const = Some(log_const.exp());
    }
    Ok(rec)
}

/// Integral part, snapping values within `1e-9` of an integer onto it.
fn integral_part(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// `s = [−log ε / log λ + 2αn / log λ] + 1` and `M = [log sup|f′| / log λ] + 1`.
pub fn lemma_constants(
    epsilon: f64,
    alpha: f64,
    n: usize,
    lambda_exp: f64,
    sup_deriv: f64,
) -> Result<(i64, i64), CoverError> {
    if !(lambda_exp > 1.0) {
        return Err(CoverError::Domain(format!("lambda_exp must exceed 1, got {lambda_exp}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(CoverError::Precondition(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if !(sup_deriv >= 1.0) {
        return Err(CoverError::Precondition(format!("sup_deriv must be ≥ 1, got {sup_deriv}")));
    }
    let ll = lambda_exp.ln();
    let s = integral_part(-epsilon.ln() / ll + 2.0 * alpha * n as f64 / ll) + 1;
    let m = integral_part(sup_deriv.ln() / ll) + 1;
    Ok((s, m))
}

fn fibonacci_point(i: usize, count: usize) -> [f64; 3] {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden * i as f64;
    [rho * phi.cos(), rho * phi.sin(), z]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// `sup` of the spherical derivative: maximum over a Fibonacci grid of
/// `samples` points followed by compass search around the best cells.
pub fn sup_spherical_deriv(f: &RationalMap, samples: usize) -> f64 {
    let samples = samples.max(16);
    let value = |v: [f64; 3]| f.spherical_deriv(SpherePoint::from_unit_vector(v));
    let mut grid: Vec<(f64, usize)> = (0..samples)
        .into_par_iter()
        .map(|i| (value(fibonacci_point(i, samples)), i))
        .collect();
    grid.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let spacing = (4.0 * std::f64::consts::PI / samples as f64).sqrt();
    grid.iter()
        .take(16)
        .map(|&(v0, i)| {
            let mut p = fibonacci_point(i, samples);
            let mut best = v0;
            let mut h = spacing;
            while h > 1e-12 {
                // tangent frame at p
                let a = if p[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let t1 = normalize([
                    p[1] * a[2] - p[2] * a[1],
                    p[2] * a[0] - p[0] * a[2],
                    p[0] * a[1] - p[1] * a[0],
                ]);
                let t2 = [
                    p[1] * t1[2] - p[2] * t1[1],
                    p[2] * t1[0] - p[0] * t1[2],
                    p[0] * t1[1] - p[1] * t1[0],
                ];
                let mut moved = false;
                for (s1, s2) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                    let q = normalize([
                        p[0] + h * (s1 * t1[0] + s2 * t2[0]),
                        p[1] + h * (s1 * t1[1] + s2 * t2[1]),
                        p[2] + h * (s1 * t1[2] + s2 * t2[2]),
                    ]);
                    let v = value(q);
                    if v > best {
                        best = v;
                        p = q;
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    h *= 0.5;
                }
            }
            best
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratmap::{critical_points, julia_classify};
    use crate::sphere::{Chart, ChartDisk};
    use approx::assert_relative_eq;

    fn square() -> RationalMap {
        RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap()
    }

    fn chebyshev() -> RationalMap {
        RationalMap::polynomial_real(&[-2.0, 0.0, 1.0]).unwrap()
    }

    fn euclidean_disk(c: f64, r: f64) -> ChordalDisk {
        ChordalDisk::from_chart(&ChartDisk {
            center: Complex::new(c, 0.0),
            radius: r,
            chart: Chart::Standard,
        })
    }

    fn assert_on_base(f: &RationalMap, c: &LiftedCurve) {
        for &v in &c.vertices {
            let d = chordal_dist(f.iterate(v, c.level), c.base.center);
            assert!((d - c.base.radius).abs() < 1e-6, "vertex off the base circle: {d}");
        }
        assert!(chordal_dist(c.vertices[0], *c.vertices.last().unwrap()) < CLOSURE_TOL);
    }

    #[test]
    fn lift_of_centered_disk_encloses_critical_point() {
        let f = square();
        let curve = lift_circle(&f, euclidean_disk(0.0, 0.25), SpherePoint::real(0.5), 1, 256).unwrap();
        assert_eq!(curve.loops, 2);
        assert_on_base(&f, &curve);
        for v in &curve.vertices {
            assert_relative_eq!(v.finite().unwrap().norm(), 0.5, epsilon = 1e-12);
        }
        assert_relative_eq!(curve_diameter(&curve), 1.6, epsilon = 1e-6);
        assert!(point_in_component(&curve, SpherePoint::ZERO).unwrap());
        assert!(!point_in_component(&curve, SpherePoint::Infinity).unwrap());
    }

    #[test]
    fn lift_of_off_center_disk_is_univalent() {
        let f = square();
        let curve = lift_circle(&f, euclidean_disk(1.0, 0.25), SpherePoint::real(1.0), 1, 512).unwrap();
        assert_eq!(curve.loops, 1);
        assert_on_base(&f, &curve);
        let xs: Vec<f64> = curve.vertices.iter().map(|v| v.finite().unwrap().re).collect();
        let width = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((width - (1.25f64.sqrt() - 0.75f64.sqrt())).abs() < 1e-4);
        assert!(!point_in_component(&curve, SpherePoint::ZERO).unwrap());
        assert!(point_in_component(&curve, SpherePoint::real(1.0)).unwrap());
    }

    #[test]
    fn level_zero_is_the_base_circle() {
        let f = square();
        let disk = ChordalDisk::new(SpherePoint::real(0.3), 0.2).unwrap();
        let c = lift_circle(&f, disk, SpherePoint::real(0.3), 0, 64).unwrap();
        assert_eq!(c.loops, 1);
        assert_on_base(&f, &c);
        assert_relative_eq!(curve_diameter(&c), 2.0 * 0.2 * (1.0 - 0.01f64).sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn power_map_loops_multiply() {
        let f = square();
        let tower = lift_tower(&f, ChordalDisk::new(SpherePoint::ZERO, 0.5).unwrap(), SpherePoint::real(0.1), 3, 64).unwrap();
        let loops: Vec<usize> = tower.iter().map(|c| c.loops).collect();
        assert_eq!(loops, vec![1, 2, 4, 8]);
        for c in &tower {
            assert_on_base(&f, c);
        }
    }

    #[test]
    fn lift_rejects_bad_input() {
        let f = square();
        let disk = ChordalDisk::new(SpherePoint::ZERO, 0.1).unwrap();
        assert!(matches!(lift_circle(&f, disk, SpherePoint::real(2.0), 1, 64), Err(CoverError::Precondition(_))));
        assert!(matches!(lift_circle(&f, disk, SpherePoint::ZERO, 1, 10), Err(CoverError::Precondition(_))));
    }

    #[test]
    fn unit_circle_membership() {
        let circle = LiftedCurve {
            vertices: (0..=256).map(|k| SpherePoint::from_complex(Complex::from_polar(1.0, TAU * k as f64 / 256.0))).collect(),
            level: 0,
            base: ChordalDisk::new(SpherePoint::ZERO, 2f64.sqrt()).unwrap(),
            base_preimage: SpherePoint::ZERO,
            loops: 1,
        };
        assert!(point_in_component(&circle, SpherePoint::ZERO).unwrap());
        assert!(!point_in_component(&circle, SpherePoint::real(2.0)).unwrap());
        assert!(matches!(point_in_component(&circle, SpherePoint::real(1.0)), Err(CoverError::OnCurve { .. })));
        // reversed orientation: the component is the outside
        let mut outside = circle.clone();
        outside.vertices.reverse();
        assert!(!point_in_component(&outside, SpherePoint::ZERO).unwrap());
        assert!(point_in_component(&outside, SpherePoint::real(2.0)).unwrap());
    }

    #[test]
    fn diameter_degenerate_and_accelerated() {
        assert_eq!(diameter_exact(&[SpherePoint::real(0.7); 5]), 0.0);
        let mut rng = rng::stream(11, 0);
        for _ in 0..3 {
            let pts: Vec<SpherePoint> = (0..5000)
                .map(|_| SpherePoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3)))
                .collect();
            assert!((diameter_exact(&pts) - diameter_accelerated(&pts)).abs() < 1e-9);
        }
    }

    #[test]
    fn repelling_fixed_points_of_chebyshev() {
        let fixed = repelling_fixed_points(&chebyshev()).unwrap();
        assert_eq!(fixed.len(), 2);
        let s = julia_sample(&chebyshev(), 200, 3).unwrap();
        for p in s {
            let z = p.finite().unwrap();
            assert!(z.im.abs() < 1e-6 && z.re.abs() <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn expshrink_on_chebyshev_fixed_point() {
        let f = chebyshev();
        let est = expshrink_estimate(
            &f,
            &ExpShrinkParams {
                r: 0.1,
                depth: 8,
                base_samples: 1,
                branch_samples: 1,
                curve_samples: 128,
                anchor: Some(SpherePoint::real(2.0)),
                branch_mode: BranchMode::Nearest,
                seed: 0,
            },
        )
        .unwrap();
        for w in est.per_n_max_diam.windows(2).skip(1) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
        assert!((est.lambda_exp.ln() / 4f64.ln() - 1.0).abs() < 0.1);
        assert!(expshrink_estimate(&f, &ExpShrinkParams { depth: 1, ..est_params() }).is_err());
    }

    fn est_params() -> ExpShrinkParams {
        ExpShrinkParams {
            r: 0.3,
            depth: 6,
            base_samples: 8,
            branch_samples: 2,
            curve_samples: 64,
            anchor: None,
            branch_mode: BranchMode::Random,
            seed: 5,
        }
    }

    #[test]
    fn expshrink_on_power_map() {
        let est = expshrink_estimate(&square(), &est_params()).unwrap();
        assert!((1.9..=2.1).contains(&est.lambda_exp), "{}", est.lambda_exp);
        assert_eq!(est.failures, 0);
    }

    #[test]
    fn tce_examples() {
        let f = square();
        let p = TceParams { m: 0, p: 1, r: 0.3 };
        let res = tce_check(&f, SpherePoint::real(1.0), p, 10, 64, None).unwrap();
        assert!(res.pass);
        assert!(res.counts.iter().all(|&c| c == 0));

        let g = chebyshev();
        let res = tce_check(&g, SpherePoint::real(2.0), TceParams { m: 1, p: 2, r: 0.1 }, 10, 64, None).unwrap();
        assert!(res.pass, "{res:?}");

        assert!(tce_check(&f, SpherePoint::real(1.0), TceParams { m: -1, p: 1, r: 0.3 }, 10, 64, None).is_err());
        assert!(tce_check(&f, SpherePoint::real(0.5), p, 10, 64, None).is_err());
    }

    #[test]
    fn ce2ce_on_misiurewicz() {
        let f = RationalMap::new(
            crate::Polynomial::new(vec![Complex::new(0.0, 1.0), Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]),
            crate::Polynomial::from_real(&[1.0]),
        )
        .unwrap();
        let cs = julia_classify(&f, &critical_points(&f), 500, &[]);
        let scale = Scale::new(1.5, 0.01).unwrap();
        let rec = ce2ce_check(&f, &cs, SpherePoint::ZERO, 30, scale, &crate::backward::shrinking_schedule(40).unwrap(), 64).unwrap();
        assert_eq!(rec.m, Some(1));
        assert_relative_eq!(rec.r.unwrap(), 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(rec.exponent, 0);
        assert!(rec.koebe_constant.unwrap() < 100.0);
        assert!(rec.admissible_const.unwrap() > 0.0);
    }

    #[test]
    fn lemma_constant_examples() {
        assert_eq!(lemma_constants(1.0, 0.0, 5, 2.0, 1.0).unwrap().0, 1);
        let e = std::f64::consts::E;
        assert_eq!(lemma_constants(1.0 / e, 0.5, 10, e, 1.0).unwrap().0, 12);
        assert_eq!(lemma_constants(1.0, 0.0, 1, e, e * e).unwrap().1, 3);
        assert!(matches!(lemma_constants(0.5, 0.0, 1, 1.0, 2.0), Err(CoverError::Domain(_))));
    }

    #[test]
    fn sup_derivative_of_square() {
        // |2z|(1+|z|²)/(1+|z|⁴) peaks at |z| = 1 with value 2
        let s = sup_spherical_deriv(&square(), 20_000);
        assert_relative_eq!(s, 2.0, epsilon = 1e-9);
    }
}
