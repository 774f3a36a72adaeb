//! Estimators checked against independent brute-force references.

use celab_core::backward::{
    branch_pullback, ce2_min_derivative, cece2_check, preimage_tree, shrinking_schedule, type1_detect, Scale,
};
use celab_core::cover::{curve_diameter, lift_circle, lift_tower, point_in_component};
use celab_core::ratmap::{critical_points, julia_classify};
use celab_core::{Complex, CriticalSet, Polynomial, RationalMap, SpherePoint};
use celab_testkit::{chebyshev_ce2_min, grid_component, quadratic_ce2_minima, C};

fn chebyshev() -> RationalMap {
    RationalMap::polynomial_real(&[-2.0, 0.0, 1.0]).unwrap()
}

fn misiurewicz() -> RationalMap {
    RationalMap::new(
        Polynomial::new(vec![Complex::new(0.0, 1.0), Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)]),
        Polynomial::from_real(&[1.0]),
    )
    .unwrap()
}

fn classified(f: &RationalMap) -> CriticalSet {
    julia_classify(f, &critical_points(f), 500, &[])
}

fn finite(p: SpherePoint) -> C {
    p.finite().expect("finite point")
}

#[test]
fn ce2_matches_nested_square_roots() {
    for (f, c) in [(chebyshev(), C::new(-2.0, 0.0)), (misiurewicz(), C::new(0.0, 1.0))] {
        let est = ce2_min_derivative(&f, &classified(&f), SpherePoint::ZERO, 10).unwrap();
        let oracle = quadratic_ce2_minima(c, C::new(0.0, 0.0), 10);
        for (k, (a, b)) in est.per_n_min.iter().zip(&oracle).enumerate() {
            assert!((a / b - 1.0).abs() < 1e-9, "depth {}: {a} vs {b}", k + 1);
        }
    }
}

#[test]
fn ce2_chebyshev_closed_form() {
    let f = chebyshev();
    let est = ce2_min_derivative(&f, &classified(&f), SpherePoint::ZERO, 12).unwrap();
    for n in 1..=12u32 {
        let want = chebyshev_ce2_min(n);
        assert!((est.per_n_min[n as usize - 1] / want - 1.0).abs() < 1e-9);
    }
    // depth 3: Euclidean part 2³/cos(π/2⁴) times the endpoint factor
    let phi = 7.0 * std::f64::consts::PI / 16.0;
    let euclid = 8.0 / (std::f64::consts::PI / 16.0).cos();
    assert!((est.per_n_min[2] - euclid * (1.0 + 4.0 * phi.cos().powi(2))).abs() < 1e-9);
    for b in preimage_tree(&f, SpherePoint::ZERO, 3).unwrap() {
        let z = finite(b.points[3]);
        assert!(z.im.abs() < 1e-12 && z.re.abs() <= 2.0);
    }
}

#[test]
fn cece2_constant_is_stable() {
    let f = chebyshev();
    let cs = classified(&f);
    let consts: Vec<f64> = (5..=10)
        .map(|n| cece2_check(&f, &cs, SpherePoint::ZERO, n, 0.01, 0.1, 1.0).unwrap().admissible_const)
        .collect();
    let mid = consts[consts.len() / 2];
    for c in &consts {
        assert!(*c > 0.0);
        assert!((c / mid - 1.0).abs() <= 0.2, "{consts:?}");
    }
}

struct Config {
    f: RationalMap,
    poly: Vec<C>,
    x: SpherePoint,
    r: f64,
    w: SpherePoint,
    n: usize,
}

fn configurations() -> Vec<Config> {
    let mut out = Vec::new();
    let cheb = vec![C::new(-2.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    let sq = vec![C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    let mis = vec![C::new(0.0, 1.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    for n in 1..=4 {
        out.push(Config { f: chebyshev(), poly: cheb.clone(), x: SpherePoint::real(2.0), r: 0.1, w: SpherePoint::real(2.0), n });
        // branch through the preimages of the other fixed point −1
        let w = chebyshev().preimages(SpherePoint::real(-1.0)).unwrap()[0].0;
        let mut p = w;
        for _ in 1..n {
            p = chebyshev().preimages(p).unwrap()[1].0;
        }
        let base = chebyshev().iterate(p, n);
        out.push(Config { f: chebyshev(), poly: cheb.clone(), x: base, r: 0.2, w: p, n });
        let z1 = SpherePoint::from_complex(Complex::from_polar(1.0, 0.3));
        let mut q = z1;
        for _ in 0..n {
            q = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap().preimages(q).unwrap()[0].0;
        }
        out.push(Config { f: RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap(), poly: sq.clone(), x: z1, r: 0.3, w: q, n });
        let m = misiurewicz();
        let mut v = SpherePoint::new(-1.0, 1.0);
        for _ in 0..n {
            v = m.preimages(v).unwrap()[0].0;
        }
        out.push(Config { f: m.clone(), poly: mis.clone(), x: SpherePoint::new(-1.0, 1.0), r: 0.15, w: v, n });
    }
    out
}

#[test]
fn lifted_diameters_match_grid_oracle() {
    for cfg in configurations() {
        let disk = celab_core::ChordalDisk::new(cfg.x, cfg.r).unwrap();
        let curve = lift_circle(&cfg.f, disk, cfg.w, cfg.n, 512).unwrap();
        let lifted = curve_diameter(&curve);
        let poly = cfg.poly.clone();
        let grid = grid_component(
            move |z| celab_testkit::poly_eval(&poly, z),
            cfg.n,
            finite(cfg.x),
            cfg.r,
            finite(cfg.w),
            0.75 * lifted,
            320,
        );
        let oracle = grid.diameter();
        assert!(
            (lifted / oracle - 1.0).abs() < 0.02,
            "n = {}, x = {:?}: lifted {lifted} vs grid {oracle}",
            cfg.n,
            cfg.x
        );
        // every vertex pushes forward to the base circle
        for &v in &curve.vertices {
            let d = celab_core::chordal_dist(cfg.f.iterate(v, cfg.n), cfg.x);
            assert!((d - cfg.r).abs() < 1e-6);
        }
    }
}

#[test]
fn nested_disks_give_nested_components() {
    for cfg in configurations() {
        let small = celab_core::ChordalDisk::new(cfg.x, 0.5 * cfg.r).unwrap();
        let big = celab_core::ChordalDisk::new(cfg.x, cfg.r).unwrap();
        let a = lift_tower(&cfg.f, small, cfg.w, cfg.n, 128).unwrap();
        let b = lift_tower(&cfg.f, big, cfg.w, cfg.n, 128).unwrap();
        for (s, l) in a.iter().zip(&b) {
            assert!(curve_diameter(s) <= curve_diameter(l));
        }
    }
}

#[test]
fn critical_point_membership_matches_grid() {
    // z² with a disk around 0.25 containing the critical value 0 or not
    let f = RationalMap::polynomial_real(&[0.0, 0.0, 1.0]).unwrap();
    let poly = vec![C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    for r in [0.2, 0.4, 0.6] {
        let x = SpherePoint::real(0.25);
        let curve = lift_circle(&f, celab_core::ChordalDisk::new(x, r).unwrap(), SpherePoint::real(0.5), 1, 256).unwrap();
        let p2 = poly.clone();
        let grid = grid_component(move |z| celab_testkit::poly_eval(&p2, z), 1, C::new(0.25, 0.0), r, C::new(0.5, 0.0), 1.0, 400);
        assert_eq!(point_in_component(&curve, SpherePoint::ZERO).unwrap(), grid.contains(C::new(0.0, 0.0)), "r = {r}");
    }
}

#[test]
fn type1_detector_matches_geometric_oracle() {
    let f = chebyshev();
    let poly = vec![C::new(-2.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)];
    let z = SpherePoint::real(-2.0 + 0.01);
    // R large enough that the critical value ∞ satisfies condition (3)
    let scale = Scale::new(0.95, 0.01).unwrap();
    let schedule = shrinking_schedule(10).unwrap();
    let (mut decided, mut agreed) = (0, 0);
    for n in 1..=6 {
        for branch in preimage_tree(&f, z, n).unwrap() {
            for r in [0.004, 0.015] {
                let filled = branch_pullback(&f, &branch, r, &schedule, 256).unwrap();
                for tol in [0.005, 0.03] {
                    let res = type1_detect(&f, &filled, scale, tol).unwrap();
                    // oracle: rasterized U_k for every k, membership of 0 and
                    // distance of 0 and ∞ to ∂U_n
                    let mut avoids = true;
                    let mut boundary_dist = f64::INFINITY;
                    let mut step = 0.0;
                    for k in 1..=n {
                        let p = poly.clone();
                        let g = grid_component(
                            move |w| celab_testkit::poly_eval(&p, w),
                            k,
                            C::new(-1.99, 0.0),
                            r * schedule.delta(k),
                            finite(branch.points[k]),
                            0.75 * filled.levels[k - 1].diam_u.max(1e-4),
                            300,
                        );
                        avoids &= !g.contains(C::new(0.0, 0.0));
                        if k == n {
                            boundary_dist = g.boundary_distance(C::new(0.0, 0.0));
                            step = 2.0 * g.step;
                        }
                    }
                    assert_eq!(avoids, res.avoids_critical, "n = {n}, r = {r}: avoidance differs");
                    if (boundary_dist - tol).abs() <= step {
                        continue; // within grid resolution of the threshold
                    }
                    decided += 1;
                    let oracle = avoids && boundary_dist < tol;
                    if oracle == res.is_type1 {
                        agreed += 1;
                    } else {
                        panic!("n = {n}, r = {r}, tol = {tol}: oracle {oracle} (dist {boundary_dist}), detector {res:?}");
                    }
                }
            }
        }
    }
    assert_eq!(decided, agreed);
    assert!(decided > 400, "only {decided} configurations decided");
}
