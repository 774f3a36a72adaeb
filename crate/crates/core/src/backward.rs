//! Backward orbits: preimage trees, the CE2 exponent, shrinking
//! neighbourhoods and type-1 orbits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{lift_circle, point_in_component, CoverError, LiftedCurve};
use crate::orbit::{fit_exponent, OrbitError, CRITICAL_HIT_TOL, CRITICAL_MATCH_TOL};
use crate::ratmap::{CriticalSet, MapError, RationalMap};
use crate::sphere::{chordal_dist, ChordalDisk, SpherePoint};

/// Largest number of branches a tree may have.
pub const DEFAULT_BRANCH_CAP: usize = 2_000_000;
/// Frontier size at which the tree walk switches to parallel depth-first.
const PARALLEL_FRONTIER: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackwardError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{requested} branches exceed the cap of {cap}; largest feasible depth is {max_depth}")]
    TooManyBranches {
        requested: u128,
        cap: usize,
        max_depth: usize,
    },
    #[error("critical point reached by a backward branch at depth {depth}: {branch:?}")]
    CriticalPreimage { depth: usize, branch: Vec<SpherePoint> },
    #[error("{target:?} is f^{k}({origin:?}) for another critical point")]
    OrbitOfCritical {
        origin: SpherePoint,
        target: SpherePoint,
        k: usize,
    },
    #[error("lifting failed at level {level}: {source}")]
    Lift { level: usize, source: CoverError },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// `δ_k = 2^{−(k+2)}` and `Δ_n = ∏_{k<n}(1 − δ_k)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShrinkingSchedule {
    pub deltas: Vec<f64>,
    /// `Δ_0, …, Δ_n`
    pub big_deltas: Vec<f64>,
}

#[inline]
fn schedule_delta(k: usize) -> f64 {
    0.5f64.powi(k as i32 + 2)
}

pub fn shrinking_schedule(n: usize) -> Result<ShrinkingSchedule, BackwardError> {
    if n == 0 {
        return Err(BackwardError::Precondition("schedule length must be ≥ 1".into()));
    }
    let deltas: Vec<f64> = (0..n).map(schedule_delta).collect();
    let mut big = Vec::with_capacity(n + 1);
    big.push(1.0);
    for d in &deltas {
        big.push(big.last().unwrap() * (1.0 - d));
    }
    Ok(ShrinkingSchedule { deltas, big_deltas: big })
}

impl ShrinkingSchedule {
    /// `Δ_k`; computed from the closed form past the stored horizon.
    pub fn delta(&self, k: usize) -> f64 {
        match self.big_deltas.get(k) {
            Some(&v) => v,
            None => {
                let last = self.big_deltas.len() - 1;
                (last..k).fold(self.big_deltas[last], |acc, j| acc * (1.0 - schedule_delta(j)))
            }
        }
    }

    /// `Δ_n` at the stored horizon.
    pub fn product(&self) -> f64 {
        *self.big_deltas.last().unwrap()
    }

    /// Certified lower bound on the infinite product:
    /// `Δ_n·(1 − Σ_{k≥n} δ_k)`.
    pub fn infinite_product_lower_bound(&self) -> f64 {
        let n = self.deltas.len();
        self.product() * (1.0 - 0.5f64.powi(n as i32 + 1))
    }
}

/// The scale `R′ < R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "R_prime")]
    pub r_prime: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Scale { r: 0.1, r_prime: 0.01 }
    }
}

impl Scale {
    /// Requires `0 < R′ < R`. Scales with `R ≥ 1` are accepted but flagged by
    /// [`Scale::warnings`].
    pub fn new(r: f64, r_prime: f64) -> Result<Self, BackwardError> {
        if !(r_prime > 0.0 && r_prime < r) {
            return Err(BackwardError::Precondition(format!(
                "scale needs 0 < R′ < R, got R = {r}, R′ = {r_prime}"
            )));
        }
        Ok(Scale { r, r_prime })
    }

    pub fn warnings(&self) -> Vec<String> {
        if self.r >= 1.0 {
            vec![format!("scale R = {} is not small (R ≥ 1)", self.r)]
        } else {
            Vec::new()
        }
    }
}

/// Shrinking neighbourhood data at one depth of a branch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PullbackLevel {
    pub k: usize,
    pub diam_u: f64,
    pub diam_u_prime: f64,
    /// Critical points inside `U_k`, boundary-ambiguous ones included.
    pub critical_inside: Vec<SpherePoint>,
    /// No `U_j`, `j ≤ k`, contains a critical point.
    pub univalent: bool,
}

/// Consecutive preimages `z = z_0, z_{−1}, …, z_{−n}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardBranch {
    pub base: SpherePoint,
    pub points: Vec<SpherePoint>,
    /// `log |(f^k)′(z_{−k})|` for `k = 0..=n`.
    pub log_deriv: Vec<f64>,
    pub radius: Option<f64>,
    pub levels: Vec<PullbackLevel>,
    /// `∂U_n` from the pullback, when filled.
    pub boundary: Option<LiftedCurve>,
}

impl BackwardBranch {
    pub fn depth(&self) -> usize {
        self.points.len() - 1
    }

    fn extend(&self, p: SpherePoint, log_step: f64) -> Self {
        let mut points = self.points.clone();
        points.push(p);
        let mut log_deriv = self.log_deriv.clone();
        log_deriv.push(self.log_deriv.last().unwrap() + log_step);
        BackwardBranch {
            base: self.base,
            points,
            log_deriv,
            radius: None,
            levels: Vec::new(),
            boundary: None,
        }
    }

    pub fn root(base: SpherePoint) -> Self {
        BackwardBranch {
            base,
            points: vec![base],
            log_deriv: vec![0.0],
            radius: None,
            levels: Vec::new(),
            boundary: None,
        }
    }
}

fn check_cap(d: usize, n: usize, cap: usize) -> Result<(), BackwardError> {
    let requested = (d as u128).saturating_pow(n as u32);
    if requested > cap as u128 {
        let mut max_depth = 0;
        while (d as u128).pow(max_depth as u32 + 1) <= cap as u128 {
            max_depth += 1;
        }
        return Err(BackwardError::TooManyBranches {
            requested,
            cap,
            max_depth,
        });
    }
    Ok(())
}

/// Children of a point with multiplicity, in root order.
fn children(f: &RationalMap, z: SpherePoint) -> Result<Vec<SpherePoint>, MapError> {
    Ok(f.preimages(z)?
        .into_iter()
        .flat_map(|(p, m)| std::iter::repeat_n(p, m))
        .collect())
}

/// All `d^n` backward branches of length `n` from `c`, with multiplicity.
pub fn preimage_tree(f: &RationalMap, c: SpherePoint, n: usize) -> Result<Vec<BackwardBranch>, BackwardError> {
    preimage_tree_with_cap(f, c, n, DEFAULT_BRANCH_CAP)
}

pub fn preimage_tree_with_cap(
    f: &RationalMap,
    c: SpherePoint,
    n: usize,
    cap: usize,
) -> Result<Vec<BackwardBranch>, BackwardError> {
    if n == 0 {
        return Err(BackwardError::Precondition("tree depth must be ≥ 1".into()));
    }
    check_cap(f.degree(), n, cap)?;
    let mut frontier = vec![BackwardBranch::root(c)];
    for _ in 0..n {
        let next: Result<Vec<Vec<BackwardBranch>>, MapError> = frontier
            .par_iter()
            .map(|b| {
                let tip = *b.points.last().unwrap();
                Ok(children(f, tip)?
                    .into_iter()
                    .map(|p| b.extend(p, f.spherical_deriv(p).ln()))
                    .collect())
            })
            .collect();
        frontier = next?.into_iter().flatten().collect();
    }
    Ok(frontier)
}

/// Fit of `min_{w ∈ f^{−n}(c)} |(f^n)′(w)| ≥ C₂ λ₂ⁿ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CE2Estimate {
    pub critical_point: SpherePoint,
    pub lambda2: f64,
    pub log_lambda2: f64,
    pub c2: f64,
    /// Index `k − 1` holds the minimum at depth `k`, `k = 1..=n`.
    pub per_n_min: Vec<f64>,
    pub per_n_min_log: Vec<f64>,
    pub branches: u128,
    pub observed: bool,
}

struct TreeWalk<'a> {
    f: &'a RationalMap,
    crit: Vec<SpherePoint>,
    depth: usize,
}

impl TreeWalk<'_> {
    fn step(&self, path: &[SpherePoint]) -> Result<Vec<(SpherePoint, f64)>, BackwardError> {
        let tip = *path.last().unwrap();
        children(self.f, tip)?
            .into_iter()
            .map(|p| {
                let d = self.f.spherical_deriv(p);
                if d == 0.0 || self.crit.iter().any(|&c| chordal_dist(c, p) < CRITICAL_HIT_TOL) {
                    let mut branch = path.to_vec();
                    branch.push(p);
                    return Err(BackwardError::CriticalPreimage {
                        depth: path.len(),
                        branch,
                    });
                }
                Ok((p, d.ln()))
            })
            .collect()
    }

    /// Depth-first minima below `path`, whose log-derivative is `acc`.
    fn dfs(&self, path: &mut Vec<SpherePoint>, acc: f64, mins: &mut [f64]) -> Result<(), BackwardError> {
        let k = path.len() - 1;
        mins[k] = mins[k].min(acc);
        if k == self.depth {
            return Ok(());
        }
        for (p, l) in self.step(path)? {
            path.push(p);
            self.dfs(path, acc + l, mins)?;
            path.pop();
        }
        Ok(())
    }
}

/// Minimal spherical derivative over the depth-`k` preimages of `c`.
pub fn ce2_min_derivative(
    f: &RationalMap,
    cs: &CriticalSet,
    c: SpherePoint,
    n: usize,
) -> Result<CE2Estimate, BackwardError> {
    if n == 0 {
        return Err(BackwardError::Precondition("depth must be ≥ 1".into()));
    }
    if !cs.has_julia_critical() {
        return Err(OrbitError::NoJuliaCritical.into());
    }
    let c = match cs.find(c, CRITICAL_MATCH_TOL) {
        Some(e) if e.in_julia => e.point,
        _ => return Err(OrbitError::NotJuliaCritical(c).into()),
    };
    check_cap(f.degree(), n, DEFAULT_BRANCH_CAP)?;
    for other in cs.all_points() {
        if chordal_dist(other, c) <= CRITICAL_MATCH_TOL {
            continue;
        }
        let mut z = other;
        for k in 1..=n {
            z = f.eval(z);
            if chordal_dist(z, c) < CRITICAL_MATCH_TOL {
                return Err(BackwardError::OrbitOfCritical {
                    origin: other,
                    target: c,
                    k,
                });
            }
        }
    }
    let walk = TreeWalk {
        f,
        crit: cs.all_points(),
        depth: n,
    };
    // breadth-first until there is enough work to spread
    let mut mins = vec![f64::INFINITY; n + 1];
    let mut frontier: Vec<(Vec<SpherePoint>, f64)> = vec![(vec![c], 0.0)];
    while frontier.len() < PARALLEL_FRONTIER && frontier[0].0.len() <= n {
        let mut next = Vec::with_capacity(frontier.len() * f.degree());
        for (path, acc) in &frontier {
            let k = path.len() - 1;
            mins[k] = mins[k].min(*acc);
            for (p, l) in walk.step(path)? {
                let mut q = path.clone();
                q.push(p);
                next.push((q, acc + l));
            }
        }
        frontier = next;
    }
    let partial: Vec<Result<Vec<f64>, BackwardError>> = frontier
        .into_par_iter()
        .map(|(mut path, acc)| {
            let mut local = vec![f64::INFINITY; n + 1];
            walk.dfs(&mut path, acc, &mut local)?;
            Ok(local)
        })
        .collect();
    for r in partial {
        for (m, x) in mins.iter_mut().zip(r?) {
            *m = m.min(x);
        }
    }
    mins[0] = 0.0;
    let fit = fit_exponent(&mins, 0);
    Ok(CE2Estimate {
        critical_point: c,
        lambda2: fit.log_lambda.exp(),
        log_lambda2: fit.log_lambda,
        c2: fit.log_c.exp(),
        per_n_min: mins[1..].iter().map(|l| l.exp()).collect(),
        per_n_min_log: mins[1..].to_vec(),
        branches: (f.degree() as u128).pow(n as u32),
        observed: fit.log_lambda > 0.0,
    })
}

/// Fills the shrinking neighbourhoods `U_k`, `U_k′` along `branch`.
pub fn branch_pullback(
    f: &RationalMap,
    branch: &BackwardBranch,
    r: f64,
    schedule: &ShrinkingSchedule,
    samples: usize,
) -> Result<BackwardBranch, BackwardError> {
    if !(r > 0.0 && r < 2.0) {
        return Err(BackwardError::Precondition(format!("radius must lie in (0, 2), got {r}")));
    }
    let n = branch.depth();
    if n == 0 {
        return Err(BackwardError::Precondition("branch must have length ≥ 1".into()));
    }
    let crit: Vec<SpherePoint> = f.critical_points_raw().iter().map(|c| c.0).collect();
    let z = branch.base;
    let lift = |k: usize, radius: f64| -> Result<LiftedCurve, BackwardError> {
        let disk = ChordalDisk::new(z, radius).map_err(|e| BackwardError::Lift {
            level: k,
            source: e.into(),
        })?;
        lift_circle(f, disk, branch.points[k], k, samples)
            .map_err(|source| BackwardError::Lift { level: k, source })
    };
    let per_level: Vec<Result<(PullbackLevel, LiftedCurve), BackwardError>> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let u = lift(k, r * schedule.delta(k))?;
            let u_prime = lift(k, r * schedule.delta(k + 1))?;
            let critical_inside = crit
                .iter()
                .copied()
                .filter(|&c| !matches!(point_in_component(&u, c), Ok(false)))
                .collect();
            Ok((
                PullbackLevel {
                    k,
                    diam_u: u.diameter(),
                    diam_u_prime: u_prime.diameter(),
                    critical_inside,
                    univalent: true,
                },
                u,
            ))
        })
        .collect();
    let mut out = branch.clone();
    out.radius = Some(r);
    out.levels.clear();
    let mut univalent = true;
    for res in per_level {
        let (mut level, curve) = res?;
        univalent &= level.critical_inside.is_empty();
        level.univalent = univalent;
        out.levels.push(level);
        out.boundary = Some(curve);
    }
    Ok(out)
}

/// Outcome of the type-1 test with the per-condition breakdown.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Type1Result {
    pub is_type1: bool,
    /// `(c′, c″)`
    pub witness: Option<(SpherePoint, SpherePoint)>,
    pub avoids_critical: bool,
    /// Critical point nearest to `∂U_n` and its distance.
    pub nearest_boundary_critical: Option<(SpherePoint, f64)>,
    /// Critical point whose value is nearest to `f(z)` and that distance.
    pub nearest_critical_value: Option<(SpherePoint, f64)>,
}

/// Default boundary tolerance `1e-3·diam U_n`.
pub fn default_type1_tol(branch: &BackwardBranch) -> Option<f64> {
    branch.levels.last().map(|l| 1e-3 * l.diam_u)
}

pub fn type1_detect(
    f: &RationalMap,
    branch: &BackwardBranch,
    scale: Scale,
    tol: f64,
) -> Result<Type1Result, BackwardError> {
    let r = branch
        .radius
        .ok_or_else(|| BackwardError::Precondition("branch has no pullback levels".into()))?;
    if r >= 2.0 * scale.r_prime {
        return Err(BackwardError::Precondition(format!(
            "pullback radius {r} is not below 2R′ = {}",
            2.0 * scale.r_prime
        )));
    }
    let boundary = branch
        .boundary
        .as_ref()
        .ok_or_else(|| BackwardError::Precondition("branch has no boundary curve".into()))?;
    let crit: Vec<SpherePoint> = f.critical_points_raw().iter().map(|c| c.0).collect();
    let avoids = branch.levels.iter().all(|l| l.critical_inside.is_empty());
    let nearest = |score: &dyn Fn(SpherePoint) -> f64| {
        crit.iter()
            .map(|&c| (c, score(c)))
            .fold(None, |best: Option<(SpherePoint, f64)>, cur| match best {
                Some(b) if b.1 <= cur.1 => Some(b),
                _ => Some(cur),
            })
    };
    let fz = f.eval(branch.base);
    let on_boundary = nearest(&|c| boundary.distance_to(c));
    let near_value = nearest(&|c| chordal_dist(f.eval(c), fz));
    let c2 = on_boundary.filter(|x| x.1 < tol);
    let c1 = near_value.filter(|x| x.1 < scale.r);
    let witness = match (avoids, c1, c2) {
        (true, Some(a), Some(b)) => Some((a.0, b.0)),
        _ => None,
    };
    Ok(Type1Result {
        is_type1: witness.is_some(),
        witness,
        avoids_critical: avoids,
        nearest_boundary_critical: on_boundary,
        nearest_critical_value: near_value,
    })
}

/// `λⁿ·(C e^{−αn})^{μ_max − μ(c)}`
pub fn cece2_rhs(lambda: f64, c: f64, alpha: f64, n: usize, mu_max: usize, mu: usize) -> f64 {
    let e = mu_max.saturating_sub(mu) as i32;
    lambda.powi(n as i32) * (c * (-alpha * n as f64).exp()).powi(e)
}

/// Diagnostic for `|(fⁿ)′(c_{−n})|^{μ_max} ≥ const·λⁿ·r₁^{μ_max−μ(c)}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cece2Record {
    pub critical_point: SpherePoint,
    pub mu: usize,
    pub mu_max: usize,
    /// `λ = λ₂^{μ_max}` from the CE2 fit.
    pub lambda: f64,
    /// `μ_max·log min |(f^k)′(c_{−k})|` for `k = 1..=n`.
    pub lhs_log: Vec<f64>,
    /// Largest `const` valid for all `k ≤ n` with `r₁` replaced by `C e^{−αk}`.
    pub admissible_const: f64,
    /// Largest `const` valid for all `k ≤ n` with the supplied `r₁`.
    pub admissible_const_r1: f64,
    /// `(λ e^{−α(μ_max−μ)})^{1/μ_max}`
    pub implied_lambda2: f64,
    /// `(const·C^{μ_max−μ})^{1/μ_max}`
    pub implied_c2: f64,
    pub ce2: CE2Estimate,
}

#[allow(clippy::too_many_arguments)]
pub fn cece2_check(
    f: &RationalMap,
    cs: &CriticalSet,
    c: SpherePoint,
    n: usize,
    r1: f64,
    alpha: f64,
    sr_c: f64,
) -> Result<Cece2Record, BackwardError> {
    let ce2 = ce2_min_derivative(f, cs, c, n)?;
    let mu = cs.find(ce2.critical_point, 0.0).map_or(1, |e| e.local_degree);
    let mu_max = cs
        .mu_max()
        .ok_or_else(|| BackwardError::Precondition("μ_max undefined".into()))?;
    let e = (mu_max - mu) as f64;
    let m = mu_max as f64;
    let log_lambda = m * ce2.log_lambda2;
    let lhs_log: Vec<f64> = ce2.per_n_min_log.iter().map(|l| m * l).collect();
    let mut log_const = f64::INFINITY;
    let mut log_const_r1 = f64::INFINITY;
    for (i, l) in lhs_log.iter().enumerate() {
        let k = (i + 1) as f64;
        log_const = log_const.min(l - k * log_lambda - e * (sr_c.ln() - alpha * k));
        log_const_r1 = log_const_r1.min(l - k * log_lambda - e * r1.ln());
    }
    Ok(Cece2Record {
        critical_point: ce2.critical_point,
        mu,
        mu_max,
        lambda: log_lambda.exp(),
        lhs_log,
        admissible_const: log_const.exp(),
        admissible_const_r1: log_const_r1.exp(),
        implied_lambda2: ((log_lambda - alpha * e) / m).exp(),
        implied_c2: ((log_const + e * sr_c.ln()) / m).exp(),
        ce2,
    })
}
