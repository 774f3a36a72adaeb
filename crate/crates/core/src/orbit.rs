//! Forward-orbit analysis: the CE exponent, slow-recurrence distances and the
//! first-return derivative bound.
//!
//! Derivative products along orbits are accumulated as sums of logarithms of
//! single-step spherical derivatives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratmap::{CriticalSet, RationalMap};
use crate::sphere::{chordal_dist, SpherePoint};

/// Chordal distance at which an orbit point is taken to *be* a critical point.
pub const CRITICAL_HIT_TOL: f64 = 1e-12;
/// Tolerance for matching a user-supplied point against `Crit(f)`.
pub const CRITICAL_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("Crit'(f) is empty: the condition is vacuous")]
    NoJuliaCritical,
    #[error("{0:?} is not a critical point in the Julia set")]
    NotJuliaCritical(SpherePoint),
    #[error("slow recurrence violated: distance is zero at n = {n}")]
    SrViolation { n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `f^k(z₀)` for `k = 0..=N` with log-derivative prefix sums.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitSeries {
    pub points: Vec<SpherePoint>,
    /// `Σ_{j<k} log f#(f^j(z₀))`; truncated after an exact critical hit.
    pub log_deriv_prefix: Vec<f64>,
    /// First index `k` with `f^k(z₀)` on a critical point.
    pub critical_hit: Option<usize>,
}

impl OrbitSeries {
    /// `log |(f^n)′(z₀)|` when defined.
    pub fn log_deriv(&self, n: usize) -> Option<f64> {
        self.log_deriv_prefix.get(n).copied()
    }
}

pub fn forward_orbit(f: &RationalMap, z0: SpherePoint, n: usize) -> Result<OrbitSeries, OrbitError> {
    if n == 0 {
        return Err(OrbitError::InvalidArgument("orbit length N must be ≥ 1".into()));
    }
    let crit: Vec<SpherePoint> = f.critical_points_raw().iter().map(|c| c.0).collect();
    let mut points = Vec::with_capacity(n + 1);
    let mut prefix = Vec::with_capacity(n + 1);
    let mut hit = None;
    let mut z = z0;
    let mut acc = 0.0;
    prefix.push(0.0);
    points.push(z);
    for k in 0..n {
        let (next, d) = f.eval_with_deriv(z);
        if hit.is_none() {
            if d == 0.0 || crit.iter().any(|&c| chordal_dist(c, z) < CRITICAL_HIT_TOL) {
                hit = Some(k);
            } else {
                acc += d.ln();
                prefix.push(acc);
            }
        }
        z = next;
        points.push(z);
    }
    Ok(OrbitSeries {
        points,
        log_deriv_prefix: prefix,
        critical_hit: hit,
    })
}

fn julia_critical(cs: &CriticalSet, c: SpherePoint) -> Result<SpherePoint, OrbitError> {
    if !cs.has_julia_critical() {
        return Err(OrbitError::NoJuliaCritical);
    }
    match cs.find(c, CRITICAL_MATCH_TOL) {
        Some(e) if e.in_julia => Ok(e.point),
        _ => Err(OrbitError::NotJuliaCritical(c)),
    }
}

/// Tail window `[⌈N/2⌉, N]` used for exponent fits.
pub(crate) fn tail_window(n: usize) -> std::ops::RangeInclusive<usize> {
    n.div_ceil(2).max(1)..=n
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn regression_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fit of `|D_n| ≥ C λⁿ` from log values `log_d[n]`, `n = 0..=N`
/// (`log_d[0] = 0`): `log λ` is the minimum of `log_d[n]/n` over the tail
/// window and `C` the largest constant valid at every `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub log_lambda: f64,
    pub log_c: f64,
}

pub(crate) fn fit_exponent(log_d: &[f64], first: usize) -> ExponentFit {
    let n = log_d.len() - 1;
    let log_lambda = tail_window(n)
        .map(|k| log_d[k] / k as f64)
        .fold(f64::INFINITY, f64::min);
    let log_c = (first..=n)
        .map(|k| log_d[k] - k as f64 * log_lambda)
        .fold(f64::INFINITY, f64::min);
    ExponentFit { log_lambda, log_c }
}

/// Estimate of `|(fⁿ)′(f(c))| ≥ C₁ λ₁ⁿ` for one critical point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CEEstimate {
    pub critical_point: SpherePoint,
    pub lambda1: f64,
    pub log_lambda1: f64,
    pub c1: f64,
    /// `aₙ = (1/n) log |(fⁿ)′(f(c))|` for `n = 1..=N`.
    pub per_n_exponents: Vec<f64>,
    /// `log |(fⁿ)′(f(c))|` for `n = 0..=N`.
    pub log_deriv: Vec<f64>,
    /// Least-squares slope of `log |(fⁿ)′|` against `n` (diagnostic only).
    pub regression_slope: Option<f64>,
    pub observed: bool,
    /// The orbit of `f(c)` hits a critical point at this step.
    pub critical_hit: Option<usize>,
}

/// CE exponent along the orbit of `f(c)`.
pub fn ce_exponent(
    f: &RationalMap,
    cs: &CriticalSet,
    c: SpherePoint,
    n: usize,
) -> Result<CEEstimate, OrbitError> {
    let c = julia_critical(cs, c)?;
    let orbit = forward_orbit(f, f.eval(c), n)?;
    let log_deriv = orbit.log_deriv_prefix.clone();
    let per_n: Vec<f64> = (1..log_deriv.len())
        .map(|k| log_deriv[k] / k as f64)
        .collect();
    let xs: Vec<f64> = (0..log_deriv.len()).map(|k| k as f64).collect();
    let slope = regression_slope(&xs, &log_deriv);
    if orbit.critical_hit.is_some() {
        return Ok(CEEstimate {
            critical_point: c,
            lambda1: 0.0,
            log_lambda1: f64::NEG_INFINITY,
            c1: 0.0,
            per_n_exponents: per_n,
            log_deriv,
            regression_slope: slope,
            observed: false,
            critical_hit: orbit.critical_hit,
        });
    }
    let fit = fit_exponent(&log_deriv, 0);
    Ok(CEEstimate {
        critical_point: c,
        lambda1: fit.log_lambda.exp(),
        log_lambda1: fit.log_lambda,
        c1: fit.log_c.exp(),
        per_n_exponents: per_n,
        log_deriv,
        regression_slope: slope,
        observed: fit.log_lambda > 0.0,
        critical_hit: None,
    })
}

/// `dₙ = min_{c′ ∈ Crit′} σ(fⁿ(c), c′)` for `n = 1..=N`.
pub fn sr_distances(
    f: &RationalMap,
    cs: &CriticalSet,
    c: SpherePoint,
    n: usize,
) -> Result<Vec<f64>, OrbitError> {
    let c = julia_critical(cs, c)?;
    if n == 0 {
        return Err(OrbitError::InvalidArgument("horizon N must be ≥ 1".into()));
    }
    let targets = cs.julia_points();
    let mut z = c;
    Ok((0..n)
        .map(|_| {
            z = f.eval(z);
            targets
                .iter()
                .map(|&t| chordal_dist(z, t))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Finite-horizon slow-recurrence fit `dₙ ≥ C e^{−αn}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SREstimate {
    pub alpha: f64,
    pub c: f64,
    pub distance_series: Vec<f64>,
    /// The `n` (1-based) attaining the binding constraint.
    pub witness_n: usize,
}

/// Smallest `α ≥ 0` with `dₙ ≥ C e^{−αn}` for all `n`.
pub fn sr_alpha_fit(d: &[f64], c: f64) -> Result<SREstimate, OrbitError> {
    if d.is_empty() {
        return Err(OrbitError::InvalidArgument("empty distance series".into()));
    }
    if !(c > 0.0) {
        return Err(OrbitError::InvalidArgument(format!("C must be positive, got {c}")));
    }
    if let Some(k) = d.iter().position(|&x| x <= 0.0) {
        return Err(OrbitError::SrViolation { n: k + 1 });
    }
    let (witness, worst) = d
        .iter()
        .enumerate()
        .map(|(k, &x)| (k + 1, (c / x).ln() / (k + 1) as f64))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(SREstimate {
        alpha: worst.max(0.0),
        c,
        distance_series: d.to_vec(),
        witness_n: witness,
    })
}

/// `(C, α(C))` pairs along the finite-horizon frontier for the given `C`s.
pub fn sr_frontier(d: &[f64], cs: &[f64]) -> Result<Vec<(f64, f64)>, OrbitError> {
    cs.iter()
        .map(|&c| sr_alpha_fit(d, c).map(|e| (c, e.alpha)))
        .collect()
}

/// First entry of one critical orbit into the `R`-neighbourhood of `Crit′`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FirstReturn {
    pub critical_point: SpherePoint,
    /// `m(c, R)`, or `None` when there is no return within the horizon.
    pub m: Option<usize>,
    /// The critical point `c″` with `fᵐ(c) ∈ B(c″, R)`.
    pub target: Option<SpherePoint>,
    /// `|(f^{m−1})′(f(c))|`
    pub derivative: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FirstReturnBound {
    pub radius: f64,
    /// `K = max_c |(f^{m(c,R)−1})′(f(c))|` over critical points that return.
    pub k: Option<f64>,
    pub per_critical: Vec<FirstReturn>,
}

pub fn first_return_bound(
    f: &RationalMap,
    cs: &CriticalSet,
    radius: f64,
    n: usize,
) -> Result<FirstReturnBound, OrbitError> {
    if !(radius > 0.0) {
        return Err(OrbitError::InvalidArgument(format!("R must be positive, got {radius}")));
    }
    if n == 0 {
        return Err(OrbitError::InvalidArgument("horizon N must be ≥ 1".into()));
    }
    if !cs.has_julia_critical() {
        return Err(OrbitError::NoJuliaCritical);
    }
    let targets = cs.julia_points();
    let mut per_critical = Vec::new();
    for &c in &targets {
        // orbit of f(c): points[j] = f^{j+1}(c)
        let orbit = forward_orbit(f, f.eval(c), n)?;
        let mut found = FirstReturn {
            critical_point: c,
            m: None,
            target: None,
            derivative: None,
        };
        for m in 1..=n {
            let z = orbit.points[m - 1];
            let nearest = targets
                .iter()
                .map(|&t| (t, chordal_dist(z, t)))
                .fold((targets[0], f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if nearest.1 < radius {
                found.m = Some(m);
                found.target = Some(nearest.0);
                found.derivative = Some(orbit.log_deriv(m - 1).map_or(0.0, f64::exp));
                break;
            }
        }
        per_critical.push(found);
    }
    let k = per_critical
        .iter()
        .filter_map(|r| r.derivative)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    Ok(FirstReturnBound {
        radius,
        k,
        per_critical,
    })
}
