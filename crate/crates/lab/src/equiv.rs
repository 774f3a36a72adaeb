//! Cross-estimator synthesis: CE, CE2, ExpShrink and SR on one map, with the
//! pairwise gaps between their fitted exponents.

use celab_core::backward::{ce2_min_derivative, cece2_check, shrinking_schedule, CE2Estimate, Cece2Record};
use celab_core::cover::{ce2ce_check, expshrink_estimate, Ce2CeRecord, ExpShrinkEstimate, ExpShrinkParams};
use celab_core::orbit::{ce_exponent, first_return_bound, sr_alpha_fit, sr_distances, CEEstimate, FirstReturnBound, SREstimate};
use celab_core::ratmap::MapSpec;
use celab_core::{critical_points, julia_classify, CriticalSet, RationalMap, SpherePoint};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::LabError;

/// Largest relative gap between two log-exponents still called consistent.
pub const GAP_TOLERANCE: f64 = 0.15;
/// SR counts as observed when the fitted `α` stays at or below this.
pub const SR_ALPHA_TOL: f64 = 1e-2;

#[derive(Clone, Debug, Serialize)]
pub struct CeBlock {
    /// Minimum of `log λ₁` over `Crit′`; `None` if some orbit hits `Crit`.
    pub log_lambda1: Option<f64>,
    pub estimates: Vec<CEEstimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Ce2Block {
    pub log_lambda2: Option<f64>,
    pub estimates: Vec<CE2Estimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SrRecord {
    pub critical_point: SpherePoint,
    pub estimate: SREstimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct SrBlock {
    /// Largest `α` over `Crit′` at the common constant `c`.
    pub alpha: f64,
    pub c: f64,
    pub min_distance: f64,
    pub estimates: Vec<SrRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpShrinkBlock {
    pub log_lambda_exp: f64,
    /// Base points came from inverse iteration, an approximation of `J`.
    pub julia_sampled: bool,
    pub estimate: ExpShrinkEstimate,
}

/// `|x − y| / max(|x|, |y|)` for every pair of available log-exponents.
#[derive(Clone, Debug, Serialize)]
pub struct Consistency {
    pub ce_ce2: Option<f64>,
    pub ce_expshrink: Option<f64>,
    pub ce2_expshrink: Option<f64>,
    pub tolerance: f64,
    /// All available gaps within tolerance; `None` when fewer than two
    /// exponents are available.
    pub consistent: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    /// `Crit′` is empty and every condition holds vacuously.
    pub vacuous: bool,
    pub ce_observed: Option<bool>,
    pub ce2_observed: Option<bool>,
    pub expshrink_observed: Option<bool>,
    pub sr_observed: Option<bool>,
    pub summary: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub first_return: Option<FirstReturnBound>,
    pub cece2: Vec<Cece2Record>,
    pub ce2ce: Vec<Ce2CeRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub estimator: String,
    pub critical_point: Option<SpherePoint>,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub map: MapSpec,
    pub critical_points: CriticalSet,
    pub ce: Option<CeBlock>,
    pub ce2: Option<Ce2Block>,
    pub expshrink: Option<ExpShrinkBlock>,
    pub sr: Option<SrBlock>,
    pub consistency: Consistency,
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

impl EquivalenceReport {
    /// Report with every estimator absent.
    pub fn empty(map: MapSpec, critical_points: CriticalSet) -> Self {
        EquivalenceReport {
            map,
            critical_points,
            ce: None,
            ce2: None,
            expshrink: None,
            sr: None,
            consistency: consistency(None, None, None),
            verdict: Verdict {
                vacuous: false,
                ce_observed: None,
                ce2_observed: None,
                expshrink_observed: None,
                sr_observed: None,
                summary: "no estimates".into(),
            },
            diagnostics: Diagnostics::default(),
            failures: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

pub fn relative_gap(x: f64, y: f64) -> f64 {
    let m = x.abs().max(y.abs());
    if m == 0.0 {
        0.0
    } else {
        (x - y).abs() / m
    }
}

fn consistency(ce: Option<f64>, ce2: Option<f64>, exps: Option<f64>) -> Consistency {
    let gap = |a: Option<f64>, b: Option<f64>| Some(relative_gap(a?, b?));
    let c = Consistency {
        ce_ce2: gap(ce, ce2),
        ce_expshrink: gap(ce, exps),
        ce2_expshrink: gap(ce2, exps),
        tolerance: GAP_TOLERANCE,
        consistent: None,
    };
    let gaps: Vec<f64> = [c.ce_ce2, c.ce_expshrink, c.ce2_expshrink].into_iter().flatten().collect();
    Consistency {
        consistent: (!gaps.is_empty()).then(|| gaps.iter().all(|&g| g < GAP_TOLERANCE)),
        ..c
    }
}

/// Classified critical set of `f` under the configured overrides.
pub fn classify(f: &RationalMap, cfg: &RunConfig) -> CriticalSet {
    julia_classify(f, &critical_points(f), cfg.horizons.julia, &cfg.julia_overrides)
}

fn finite_min(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let mut out = f64::INFINITY;
    for x in xs {
        if !x.is_finite() {
            return None;
        }
        out = out.min(x);
    }
    out.is_finite().then_some(out)
}

pub(crate) fn ce_block(
    f: &RationalMap,
    cs: &CriticalSet,
    n: usize,
    failures: &mut Vec<Failure>,
) -> Option<CeBlock> {
    let mut estimates = Vec::new();
    for c in cs.julia_points() {
        match ce_exponent(f, cs, c, n) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(failure("ce", Some(c), e)),
        }
    }
    (!estimates.is_empty()).then(|| CeBlock {
        log_lambda1: finite_min(estimates.iter().map(|e| e.log_lambda1)),
        estimates,
    })
}

pub(crate) fn ce2_block(
    f: &RationalMap,
    cs: &CriticalSet,
    n: usize,
    failures: &mut Vec<Failure>,
) -> Option<Ce2Block> {
    let mut estimates = Vec::new();
    for c in cs.julia_points() {
        match ce2_min_derivative(f, cs, c, n) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(failure("ce2", Some(c), e)),
        }
    }
    (!estimates.is_empty()).then(|| Ce2Block {
        log_lambda2: finite_min(estimates.iter().map(|e| e.log_lambda2)),
        estimates,
    })
}

pub(crate) fn sr_block(
    f: &RationalMap,
    cs: &CriticalSet,
    n: usize,
    c: Option<f64>,
    failures: &mut Vec<Failure>,
) -> Option<SrBlock> {
    let mut series = Vec::new();
    for p in cs.julia_points() {
        match sr_distances(f, cs, p, n) {
            Ok(d) => series.push((p, d)),
            Err(e) => failures.push(failure("sr", Some(p), e)),
        }
    }
    if series.is_empty() {
        return None;
    }
    // default constant: smallest distance over the first half of the horizon
    let head = n.div_ceil(2);
    let c = c.unwrap_or_else(|| {
        series
            .iter()
            .flat_map(|(_, d)| d[..head].iter().copied())
            .fold(f64::INFINITY, f64::min)
    });
    let min_distance = series
        .iter()
        .flat_map(|(_, d)| d.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let mut estimates = Vec::new();
    for (p, d) in series {
        match sr_alpha_fit(&d, c) {
            Ok(e) => estimates.push(SrRecord { critical_point: p, estimate: e }),
            Err(e) => failures.push(failure("sr", Some(p), e)),
        }
    }
    (!estimates.is_empty()).then(|| SrBlock {
        alpha: estimates.iter().map(|r| r.estimate.alpha).fold(0.0, f64::max),
        c,
        min_distance,
        estimates,
    })
}

pub(crate) fn expshrink_params(cfg: &RunConfig) -> ExpShrinkParams {
    ExpShrinkParams {
        r: cfg.radii.expshrink,
        depth: cfg.horizons.cover,
        base_samples: cfg.expshrink.base_samples,
        branch_samples: cfg.expshrink.branch_samples,
        curve_samples: cfg.samples.curve,
        anchor: cfg.expshrink.anchor,
        branch_mode: cfg.expshrink.branch,
        seed: cfg.seed,
    }
}

pub(crate) fn expshrink_block(
    f: &RationalMap,
    params: &ExpShrinkParams,
    failures: &mut Vec<Failure>,
) -> Option<ExpShrinkBlock> {
    match expshrink_estimate(f, params) {
        Ok(e) => Some(ExpShrinkBlock {
            log_lambda_exp: e.lambda_exp.ln(),
            julia_sampled: params.anchor.is_none(),
            estimate: e,
        }),
        Err(e) => {
            failures.push(failure("expshrink", None, e));
            None
        }
    }
}

fn failure(estimator: &str, c: Option<SpherePoint>, e: impl std::fmt::Display) -> Failure {
    Failure {
        estimator: estimator.into(),
        critical_point: c,
        message: e.to_string(),
    }
}

fn diagnostics(
    f: &RationalMap,
    cs: &CriticalSet,
    cfg: &RunConfig,
    sr: Option<&SrBlock>,
    failures: &mut Vec<Failure>,
) -> Diagnostics {
    let mut out = Diagnostics::default();
    let scale = match cfg.scale() {
        Ok(s) => s,
        Err(e) => {
            failures.push(failure("diagnostics", None, e));
            return out;
        }
    };
    match first_return_bound(f, cs, scale.r, cfg.horizons.forward) {
        Ok(b) => out.first_return = Some(b),
        Err(e) => failures.push(failure("first_return", None, e)),
    }
    let schedule = match shrinking_schedule(cfg.horizons.forward) {
        Ok(s) => s,
        Err(e) => {
            failures.push(failure("diagnostics", None, e));
            return out;
        }
    };
    let (alpha, sr_c) = sr.map_or((0.0, 1.0), |s| (s.alpha, s.c));
    for c in cs.julia_points() {
        match cece2_check(f, cs, c, cfg.horizons.backward, scale.r, alpha, sr_c) {
            Ok(r) => out.cece2.push(r),
            Err(e) => failures.push(failure("cece2", Some(c), e)),
        }
        match ce2ce_check(f, cs, c, cfg.horizons.forward, scale, &schedule, cfg.samples.curve) {
            Ok(r) => out.ce2ce.push(r),
            Err(e) => failures.push(failure("ce2ce", Some(c), e)),
        }
    }
    out
}

/// Runs every estimator on the configured map. Estimator errors are
/// collected in `failures`; only a missing or invalid map aborts.
pub fn run_equivalence(cfg: &RunConfig) -> Result<EquivalenceReport, LabError> {
    let f = cfg.map()?;
    let cs = classify(&f, cfg);
    let mut rep = EquivalenceReport::empty(f.spec(), cs.clone());
    rep.warnings.extend(cs.warnings());
    if let Ok(s) = cfg.scale() {
        rep.warnings.extend(s.warnings());
    }
    if !cs.has_julia_critical() {
        rep.verdict.vacuous = true;
        rep.verdict.summary = "hyperbolic: vacuous".into();
        return Ok(rep);
    }

    let params = expshrink_params(cfg);
    let ((forward, backward), cover) = rayon::join(
        || {
            rayon::join(
                || {
                    let mut fails = Vec::new();
                    let ce = ce_block(&f, &cs, cfg.horizons.forward, &mut fails);
                    let sr = sr_block(&f, &cs, cfg.horizons.forward, cfg.sr.c, &mut fails);
                    (ce, sr, fails)
                },
                || {
                    let mut fails = Vec::new();
                    (ce2_block(&f, &cs, cfg.horizons.backward, &mut fails), fails)
                },
            )
        },
        || {
            let mut fails = Vec::new();
            (expshrink_block(&f, &params, &mut fails), fails)
        },
    );
    let (ce, sr, mut failures) = forward;
    failures.extend(backward.1);
    failures.extend(cover.1);
    rep.diagnostics = diagnostics(&f, &cs, cfg, sr.as_ref(), &mut failures);
    rep.ce = ce;
    rep.ce2 = backward.0;
    rep.expshrink = cover.0;
    rep.sr = sr;
    rep.failures = failures;

    if let Some(e) = &rep.expshrink {
        if e.julia_sampled {
            rep.warnings
                .push("ExpShrink base points are an inverse-iteration approximation of the Julia set".into());
        }
        if e.estimate.unreliable {
            rep.warnings.push(format!(
                "ExpShrink: {} of {} lifts failed; estimate unreliable",
                e.estimate.failures, e.estimate.attempts
            ));
        }
    }

    let l1 = rep.ce.as_ref().and_then(|b| b.log_lambda1);
    let l2 = rep.ce2.as_ref().and_then(|b| b.log_lambda2);
    let le = rep.expshrink.as_ref().map(|b| b.log_lambda_exp).filter(|x| x.is_finite());
    rep.consistency = consistency(l1, l2, le);
    rep.verdict = verdict(&rep);
    Ok(rep)
}

fn verdict(rep: &EquivalenceReport) -> Verdict {
    let ce = rep.ce.as_ref().map(|b| b.estimates.iter().all(|e| e.observed));
    let ce2 = rep.ce2.as_ref().map(|b| b.estimates.iter().all(|e| e.observed));
    let exps = rep
        .expshrink
        .as_ref()
        .map(|b| b.estimate.lambda_exp > 1.0 && !b.estimate.unreliable);
    let sr = rep.sr.as_ref().map(|b| b.alpha <= SR_ALPHA_TOL);
    let word = |name: &str, v: Option<bool>| match v {
        Some(true) => format!("{name} observed"),
        Some(false) => format!("{name} not observed"),
        None => format!("{name} absent"),
    };
    let mut summary = [word("CE", ce), word("CE2", ce2), word("ExpShrink", exps), word("SR", sr)].join(", ");
    match rep.consistency.consistent {
        Some(true) => summary.push_str(&format!("; exponent gaps within {}%", GAP_TOLERANCE * 100.0)),
        Some(false) => summary.push_str(&format!("; exponent gaps exceed {}%", GAP_TOLERANCE * 100.0)),
        None => {}
    }
    Verdict {
        vacuous: false,
        ce_observed: ce,
        ce2_observed: ce2,
        expshrink_observed: exps,
        sr_observed: sr,
        summary,
    }
}
