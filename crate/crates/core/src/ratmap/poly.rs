//! Complex polynomials and the simultaneous-iteration root finder.

use std::cmp::Ordering;

use thiserror::Error;

use crate::sphere::Complex;

const ZERO: Complex = Complex::new(0.0, 0.0);

/// Iteration cap for the Aberth–Ehrlich sweep.
pub const ABERTH_MAX_ITER: usize = 200;

/// Roots closer than this (relative to `max(1, |z|)`) are candidates for
/// being one multiple root.
const CLUSTER_PROBE: f64 = 1e-4;
/// Backward error below which a derivative counts as vanishing.
const MULTIPLE_ROOT_RESIDUAL: f64 = 1e-12;
/// Roots closer than this are always merged.
pub const CLUSTER_MERGE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("polynomial is constant; it has no roots")]
    Constant,
    #[error("root finder did not converge after {iterations} iterations ({unconverged} roots unsettled)")]
    NoConvergence {
        iterations: usize,
        unconverged: usize,
        partial: Vec<Complex>,
    },
}

/// Polynomial with complex coefficients in ascending degree order.
///
/// The leading coefficient is nonzero, except for the zero polynomial which
/// is stored as the single coefficient `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex>,
}

/// A root together with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub value: Complex,
    pub multiplicity: usize,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == ZERO {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(ZERO);
        }
        Polynomial { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex::new(c, 0.0)).collect())
    }

    /// `∏ (z − rᵢ)`
    pub fn from_roots(roots: &[Complex]) -> Self {
        let mut coeffs = vec![Complex::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![ZERO; coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * r;
            }
            coeffs = next;
        }
        Polynomial::new(coeffs)
    }

    pub fn coeffs(&self) -> &[Complex] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == ZERO
    }

    pub fn eval(&self, z: Complex) -> Complex {
        horner(&self.coeffs, z)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![ZERO]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let out = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(ZERO) - other.coeffs.get(k).copied().unwrap_or(ZERO)
            })
            .collect();
        Polynomial::new(out)
    }

    /// Drops leading coefficients that are below `rel_tol · max |cₖ|`.
    pub fn trimmed(&self, rel_tol: f64) -> Polynomial {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().norm() <= rel_tol * scale {
            coeffs.pop();
        }
        Polynomial::new(coeffs)
    }
}

#[inline]
pub(crate) fn horner(coeffs: &[Complex], z: Complex) -> Complex {
    coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
}

/// Value and first derivative by Horner's scheme.
#[inline]
pub(crate) fn horner_with_derivative(coeffs: &[Complex], z: Complex) -> (Complex, Complex) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// `Σ |cₖ| |z|ᵏ`, the scale against which evaluation error is measured.
fn abs_bound(coeffs: &[Complex], z: Complex) -> f64 {
    let r = z.norm();
    coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
}

/// Newton correction `p(z)/p′(z)`, evaluated through the reversed polynomial
/// when `|z| > 1` so that large roots do not overflow. Also returns the
/// backward-error ratio `|p(z)| / Σ|cₖ||z|ᵏ`.
fn newton_ratio(coeffs: &[Complex], rev: &[Complex], z: Complex) -> (Complex, f64) {
    let m = coeffs.len() - 1;
    if z.norm_sqr() <= 1.0 {
        let (p, dp) = horner_with_derivative(coeffs, z);
        let bound = abs_bound(coeffs, z);
        (p / dp, p.norm() / bound)
    } else {
        let u = z.inv();
        let (r, dr) = horner_with_derivative(rev, u);
        let bound = abs_bound(rev, u);
        // p(z) = z^m r(u), p'(z) = z^{m-1} (m r(u) - u r'(u))
        let denom = r * m as f64 - u * dr;
        (z * r / denom, r.norm() / bound)
    }
}

fn cmp_complex(a: &Complex, b: &Complex) -> Ordering {
    a.re
        .partial_cmp(&b.re)
        .unwrap_or(Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
}

/// All roots of `p` with multiplicity, sorted by real then imaginary part.
///
/// Exact zero roots are factored out first. The remaining roots come from an
/// Aberth–Ehrlich iteration started on a circle around the root centroid,
/// followed by Newton polishing. Approximations that are closer than
/// [`CLUSTER_MERGE`], or that form a tight cluster whose centroid is a root of
/// the `(k−1)`-th derivative, are reported as a single root of multiplicity
/// `k`.
pub fn poly_roots(p: &Polynomial) -> Result<Vec<Root>, RootError> {
    if p.degree() == 0 {
        return Err(RootError::Constant);
    }
    let coeffs = p.coeffs();
    let zeros = coeffs.iter().take_while(|&&c| c == ZERO).count();
    let rest = &coeffs[zeros..];
    let mut roots = Vec::with_capacity(p.degree());
    if zeros > 0 {
        roots.push(Root {
            value: ZERO,
            multiplicity: zeros,
        });
    }
    let m = rest.len() - 1;
    if m == 1 {
        roots.push(Root {
            value: -rest[0] / rest[1],
            multiplicity: 1,
        });
    } else if m >= 2 {
        let approx = aberth(rest)?;
        roots.extend(cluster(rest, approx));
    }
    roots.sort_by(|a, b| cmp_complex(&a.value, &b.value));
    Ok(roots)
}

fn aberth(coeffs: &[Complex]) -> Result<Vec<Complex>, RootError> {
    let m = coeffs.len() - 1;
    let lead = coeffs[m];
    let rev: Vec<Complex> = coeffs.iter().rev().copied().collect();

    // start on a circle around the centroid of the roots with radius equal to
    // the geometric mean of root moduli about that centroid
    let centroid = -coeffs[m - 1] / (lead * m as f64);
    let shifted = taylor_shift(coeffs, centroid);
    let mut radius = (shifted[0] / lead).norm().powf(1.0 / m as f64);
    if !(radius.is_finite() && radius > 0.0) {
        radius = 1.0;
    }
    let mut z: Vec<Complex> = (0..m)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / m as f64 + 0.4;
            centroid + Complex::from_polar(radius, theta)
        })
        .collect();
    let mut done = vec![false; m];
    let eps = f64::EPSILON;

    for _ in 0..ABERTH_MAX_ITER {
        let mut all_done = true;
        for i in 0..m {
            if done[i] {
                continue;
            }
            let (ratio, backward) = newton_ratio(coeffs, &rev, z[i]);
            if backward <= 4.0 * eps {
                done[i] = true;
                continue;
            }
            let mut sum = ZERO;
            for j in 0..m {
                if j != i {
                    let diff = z[i] - z[j];
                    if diff != ZERO {
                        sum += diff.inv();
                    }
                }
            }
            let w = ratio / (Complex::new(1.0, 0.0) - ratio * sum);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
            }
            if w.norm() <= 2.0 * eps * z[i].norm().max(f64::MIN_POSITIVE) {
                done[i] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            return Ok(z);
        }
    }
    let unconverged = done.iter().filter(|d| !**d).count();
    Err(RootError::NoConvergence {
        iterations: ABERTH_MAX_ITER,
        unconverged,
        partial: z,
    })
}

/// Coefficients of `p(z + s)`.
fn taylor_shift(coeffs: &[Complex], s: Complex) -> Vec<Complex> {
    let mut c = coeffs.to_vec();
    let n = c.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let t = c[j + 1] * s;
            c[j] += t;
        }
    }
    c
}

fn nth_derivative(coeffs: &[Complex], k: usize) -> Vec<Complex> {
    let mut c = coeffs.to_vec();
    for _ in 0..k {
        c = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, &a)| a * j as f64)
            .collect();
    }
    c
}

fn polish_simple(coeffs: &[Complex], z: Complex) -> Complex {
    let rev: Vec<Complex> = coeffs.iter().rev().copied().collect();
    let mut best = z;
    let (_, mut best_err) = newton_ratio(coeffs, &rev, z);
    for _ in 0..3 {
        let (ratio, _) = newton_ratio(coeffs, &rev, best);
        if !(ratio.re.is_finite() && ratio.im.is_finite()) {
            break;
        }
        let cand = best - ratio;
        let (_, err) = newton_ratio(coeffs, &rev, cand);
        if err < best_err {
            best = cand;
            best_err = err;
        } else {
            break;
        }
    }
    best
}

fn cluster(coeffs: &[Complex], mut approx: Vec<Complex>) -> Vec<Root> {
    approx.sort_by(cmp_complex);
    let m = approx.len();
    // single-linkage grouping at the probe scale
    let mut group = (0..m).collect::<Vec<_>>();
    fn find(g: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while g[r] != r {
            r = g[r];
        }
        g[i] = r;
        r
    }
    for i in 0..m {
        for j in i + 1..m {
            let scale = approx[i].norm().max(approx[j].norm()).max(1.0);
            if (approx[i] - approx[j]).norm() < CLUSTER_PROBE * scale {
                let (a, b) = (find(&mut group, i), find(&mut group, j));
                if a != b {
                    group[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for i in 0..m {
        let r = find(&mut group, i);
        members[r].push(i);
    }

    let mut out = Vec::with_capacity(m);
    for idx in members.into_iter().filter(|v| !v.is_empty()) {
        if idx.len() == 1 {
            out.push(Root {
                value: polish_simple(coeffs, approx[idx[0]]),
                multiplicity: 1,
            });
            continue;
        }
        let k = idx.len();
        let centroid = idx.iter().map(|&i| approx[i]).sum::<Complex>() / k as f64;
        let span = idx
            .iter()
            .map(|&i| (approx[i] - centroid).norm())
            .fold(0.0, f64::max);
        let scale = centroid.norm().max(1.0);
        // a genuine k-fold root is a simple root of p^(k-1) at which all
        // lower derivatives vanish as well
        let dk = nth_derivative(coeffs, k - 1);
        let refined = polish_simple(&dk, centroid);
        let vanishes = (0..k - 1).all(|j| {
            let dj = nth_derivative(coeffs, j);
            let rev: Vec<Complex> = dj.iter().rev().copied().collect();
            newton_ratio(&dj, &rev, refined).1 < MULTIPLE_ROOT_RESIDUAL
        });
        if span < CLUSTER_MERGE * scale || (vanishes && (refined - centroid).norm() <= 2.0 * span) {
            out.push(Root {
                value: refined,
                multiplicity: k,
            });
        } else {
            for &i in &idx {
                out.push(Root {
                    value: polish_simple(coeffs, approx[i]),
                    multiplicity: 1,
                });
            }
        }
    }
    out
}
