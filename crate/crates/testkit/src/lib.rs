//! Reference computations used as test oracles.
//!
//! Everything here is written from scratch against plain complex numbers and
//! never calls into `celab-core`, so agreement between the two is evidence
//! rather than tautology.

use std::collections::VecDeque;

pub use num_complex::Complex64 as C;

/// Chordal distance `2|a − b| / √((1+|a|²)(1+|b|²))` between finite points.
pub fn chordal(a: C, b: C) -> f64 {
    2.0 * (a - b).norm() / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).sqrt()
}

/// Chordal distance from a finite point to `∞`.
pub fn chordal_to_infinity(a: C) -> f64 {
    2.0 / (1.0 + a.norm_sqr()).sqrt()
}

/// Horner evaluation, ascending coefficients.
pub fn poly_eval(coeffs: &[C], z: C) -> C {
    coeffs.iter().rev().fold(C::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// For `f(z) = z² + c`: for every depth `k = 1..=n`, the minimum over all
/// `w` with `f^k(w) = target` of the spherical derivative `|(f^k)′(w)|`,
/// found by repeated square roots.
pub fn quadratic_ce2_minima(c: C, target: C, n: usize) -> Vec<f64> {
    // (point, Euclidean |(f^k)′(point)|)
    let mut level = vec![(target, 1.0f64)];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &(z, d) in &level {
            let s = (z - c).sqrt();
            for w in [s, -s] {
                next.push((w, d * 2.0 * w.norm()));
            }
        }
        let min = next
            .iter()
            .map(|&(w, d)| d * (1.0 + w.norm_sqr()) / (1.0 + target.norm_sqr()))
            .fold(f64::INFINITY, f64::min);
        out.push(min);
        level = next;
    }
    out
}

/// Closed form of the depth-`n` minimum for `z² − 2` at the critical point:
/// preimages of `0` are `2cos φ` with `φ = (2j+1)π/2^{n+1}`, where the
/// spherical derivative is `2ⁿ(1 + 4cos²φ)/sin φ`.
pub fn chebyshev_ce2_min(n: u32) -> f64 {
    let m = 1u64 << n;
    (0..m)
        .map(|j| {
            let phi = (2 * j + 1) as f64 * std::f64::consts::PI / (2 * m) as f64;
            m as f64 * (1.0 + 4.0 * phi.cos().powi(2)) / phi.sin()
        })
        .fold(f64::INFINITY, f64::min)
}

/// A pullback component rasterized on a square grid.
#[derive(Clone, Debug)]
pub struct GridComponent {
    pub origin: C,
    pub step: f64,
    pub size: usize,
    /// Membership of cell `(i, j)` at index `j * size + i`.
    pub member: Vec<bool>,
}

impl GridComponent {
    fn center(&self, i: usize, j: usize) -> C {
        self.origin + C::new((i as f64 + 0.5) * self.step, (j as f64 + 0.5) * self.step)
    }

    fn cell_of(&self, p: C) -> Option<(usize, usize)> {
        let d = (p - self.origin) / self.step;
        let (i, j) = (d.re.floor(), d.im.floor());
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.size && (j as usize) < self.size)
            .then_some((i as usize, j as usize))
    }

    pub fn contains(&self, p: C) -> bool {
        self.cell_of(p).is_some_and(|(i, j)| self.member[j * self.size + i])
    }

    /// Centers of member cells that touch a non-member cell.
    pub fn boundary(&self) -> Vec<C> {
        let n = self.size;
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if !self.member[j * n + i] {
                    continue;
                }
                let edge = i == 0
                    || j == 0
                    || i + 1 == n
                    || j + 1 == n
                    || !self.member[j * n + i - 1]
                    || !self.member[j * n + i + 1]
                    || !self.member[(j - 1) * n + i]
                    || !self.member[(j + 1) * n + i];
                if edge {
                    out.push(self.center(i, j));
                }
            }
        }
        out
    }

    /// Chordal diameter of the member cells, from their boundary.
    pub fn diameter(&self) -> f64 {
        let b = self.boundary();
        let mut best = 0.0f64;
        for (k, &p) in b.iter().enumerate() {
            for &q in &b[k + 1..] {
                best = best.max(chordal(p, q));
            }
        }
        best
    }

    /// Chordal distance from `p` to the nearest boundary cell center.
    pub fn boundary_distance(&self, p: C) -> f64 {
        self.boundary()
            .into_iter()
            .map(|q| chordal(p, q))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cell_count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }
}

/// Connected component containing `seed` of `{z : σ(fⁿ(z), center) < r}`,
/// found by flood fill on a `size × size` grid centered at `seed` with the
/// given half width. The window is doubled until the component does not
/// touch its edge.
pub fn grid_component(
    f: impl Fn(C) -> C,
    n: usize,
    center: C,
    r: f64,
    seed: C,
    half_width: f64,
    size: usize,
) -> GridComponent {
    let inside = |z: C| {
        let mut w = z;
        for _ in 0..n {
            w = f(w);
        }
        w.is_finite() && chordal(w, center) < r
    };
    let mut half = half_width;
    loop {
        let step = 2.0 * half / size as f64;
        let origin = seed - C::new(half, half);
        let mut g = GridComponent {
            origin,
            step,
            size,
            member: vec![false; size * size],
        };
        let mut seen = vec![false; size * size];
        let (si, sj) = g.cell_of(seed).expect("seed lies in its own window");
        let mut queue = VecDeque::from([(si, sj)]);
        seen[sj * size + si] = true;
        let mut touches_edge = false;
        while let Some((i, j)) = queue.pop_front() {
            if !inside(g.center(i, j)) && (i, j) != (si, sj) {
                continue;
            }
            g.member[j * size + i] = true;
            if i == 0 || j == 0 || i + 1 == size || j + 1 == size {
                touches_edge = true;
            }
            let mut push = |a: usize, b: usize| {
                if !seen[b * size + a] {
                    seen[b * size + a] = true;
                    queue.push_back((a, b));
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if i + 1 < size {
                push(i + 1, j);
            }
            if j + 1 < size {
                push(i, j + 1);
            }
        }
        if !touches_edge || half > 1e3 {
            return g;
        }
        half *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chordal_basics() {
        assert!((chordal(C::new(0.0, 0.0), C::new(1.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
        assert!((chordal_to_infinity(C::new(0.0, 0.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn chebyshev_forms_agree() {
        let q = quadratic_ce2_minima(C::new(-2.0, 0.0), C::new(0.0, 0.0), 8);
        for (k, v) in q.iter().enumerate() {
            let c = chebyshev_ce2_min(k as u32 + 1);
            assert!((v / c - 1.0).abs() < 1e-9, "{v} vs {c}");
        }
        assert!((q[0] - 6.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_disk() {
        // preimage of B(0, ·) under z² with Euclidean radius 0.25 is |z| < 0.5
        let r = chordal(C::new(0.0, 0.0), C::new(0.25, 0.0));
        let g = grid_component(|z| z * z, 1, C::new(0.0, 0.0), r, C::new(0.01, 0.0), 0.3, 300);
        assert!((g.diameter() - 1.6).abs() < 0.01);
        assert!(g.contains(C::new(0.0, 0.0)));
        assert!(!g.contains(C::new(0.6, 0.0)));
    }
}
