mod common;

use conewalk::distributions::{
    validate_hypotheses, AtomicDistribution, Distribution, GaussianDistribution,
};
use conewalk::geometry::{extremal_directions, GeneratedCone, Pyramid};
use conewalk::linalg::{add, distance, dot, norm, sub};
use conewalk::oracle_dp::{survival_dp, LatticeModel};
use conewalk::rate::{compute_rate, solve_su, DriftClass};
use proptest::prelude::*;
use rand::Rng;

fn config() -> ProptestConfig {
    // PROPTEST_CASES raises the count for longer runs.
    let cases = std::env::var("PROPTEST_CASES")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(64);
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn vec2(range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, 2)
}

fn lattice_law(seed: u64) -> Distribution {
    let mut r = common::rng(seed);
    let atoms = r.random_range(3..=6);
    common::random_lattice_law(&mut r, 2, atoms, 2)
}

/// A random pyramid in dimension 2 or 3 whose normals all lie within a
/// cone around a common axis, so that the intersection has interior.
fn random_pyramid(seed: u64) -> Pyramid {
    let mut r = common::rng(seed);
    let dim = r.random_range(2..=3);
    let axis: Vec<f64> = (0..dim).map(|_| r.random_range(0.5..1.0)).collect();
    let count = r.random_range(dim..=dim + 3);
    let mut normals = Vec::new();
    while normals.len() < count {
        let u: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        if norm(&u) > 0.1 && dot(&u, &axis) > 0.3 * norm(&u) * norm(&axis) {
            normals.push(u);
        }
    }
    Pyramid::new(&normals).unwrap()
}

/// A random lattice law with drift strictly inside the quadrant that
/// satisfies every hypothesis.
fn interior_drift_law(seed: u64) -> Option<Distribution> {
    let d = lattice_law(seed);
    let m = d.drift();
    let ok = m[0] > 0.05 && m[1] > 0.05 && validate_hypotheses(&d, &Pyramid::orthant(2)).all_pass();
    ok.then_some(d)
}

fn random_point(seed: u64, dim: usize) -> Vec<f64> {
    let mut r = common::rng(seed ^ 0x9e37_79b9);
    (0..dim).map(|_| r.random_range(-3.0..3.0)).collect()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn laplace_is_convex(seed in any::<u64>(), t in vec2(2.0), s in vec2(2.0), lam in 0.0..1.0f64) {
        let d = lattice_law(seed);
        let mid: Vec<f64> = t.iter().zip(&s).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let chord = lam * d.laplace(&t) + (1.0 - lam) * d.laplace(&s);
        prop_assert!(d.laplace(&mid) <= chord * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences(seed in any::<u64>(), t in vec2(1.5)) {
        let laws = [lattice_law(seed), GaussianDistribution::new(vec![0.4, -0.3]).unwrap().into()];
        for d in &laws {
            let g = d.grad_laplace(&t);
            let h = d.hessian_laplace(&t);
            let step = 1e-6;
            for i in 0..2 {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[i] += step;
                tm[i] -= step;
                let fd = (d.laplace(&tp) - d.laplace(&tm)) / (2.0 * step);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
                let (gp, gm) = (d.grad_laplace(&tp), d.grad_laplace(&tm));
                for j in 0..2 {
                    let fd = (gp[j] - gm[j]) / (2.0 * step);
                    prop_assert!((fd - h[(i, j)]).abs() <= 1e-5 * h[(i, j)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn tilts_compose(seed in any::<u64>(), t1 in vec2(1.0), t2 in vec2(1.0)) {
        let d = lattice_law(seed);
        let twice = d.tilt(&t1).into_distribution().tilt(&t2).into_distribution();
        let once = d.tilt(&add(&t1, &t2)).into_distribution();
        let (a, b) = (twice.as_atomic().unwrap(), once.as_atomic().unwrap());
        for (p, q) in a.probs().iter().zip(b.probs()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
        let g: Distribution = GaussianDistribution::new(vec![0.2, 0.1]).unwrap().into();
        let shifted = g.tilt(&t1).drift();
        prop_assert!(distance(&shifted, &add(&[0.2, 0.1], &t1)) <= 1e-15);
    }

    #[test]
    fn tilted_drift_is_log_gradient(seed in any::<u64>(), t in vec2(1.5)) {
        let d = lattice_law(seed);
        let l = d.laplace(&t);
        let expected: Vec<f64> = d.grad_laplace(&t).iter().map(|g| g / l).collect();
        prop_assert!(distance(&d.tilt(&t).drift(), &expected) <= 1e-12);
    }

    #[test]
    fn double_duality(seed in any::<u64>()) {
        let k = random_pyramid(seed);
        let dual = k.dual();
        let ext = extremal_directions(&dual).unwrap();
        let again = Pyramid::new(dual.restrict(&ext.indices).generators()).unwrap();
        let mut r = common::rng(seed.wrapping_add(1));
        for _ in 0..1000 {
            let x: Vec<f64> = (0..k.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
            prop_assert_eq!(k.contains(&x, 1e-9), again.contains(&x, 1e-9));
        }
    }

    #[test]
    fn projection_is_nonexpansive_and_idempotent(seed in any::<u64>()) {
        let k = random_pyramid(seed);
        let x = random_point(seed, k.dim());
        let y = random_point(seed.wrapping_add(7), k.dim());
        let (px, py) = (k.project(&x), k.project(&y));
        prop_assert!(distance(&px, &py) <= distance(&x, &y) + 1e-9);
        prop_assert!(k.contains(&px, 1e-9));
        prop_assert!(distance(&k.project(&px), &px) <= 1e-9);
    }

    #[test]
    fn moreau_decomposition(seed in any::<u64>()) {
        let k = random_pyramid(seed);
        let x = random_point(seed, k.dim());
        let p = k.project(&x);
        let polar_part = sub(&x, &p);
        let polar = GeneratedCone::new(
            &k.normals().iter().map(|u| u.iter().map(|v| -v).collect()).collect::<Vec<Vec<f64>>>(),
        ).unwrap();
        // The remainder lies in the polar cone and is orthogonal to P_K(x).
        prop_assert!(conewalk::geometry::distance_to_cone(&polar, &polar_part) <= 1e-9);
        prop_assert!(dot(&p, &polar_part).abs() <= 1e-9 * (1.0 + dot(&x, &x)));
        let d_polar = conewalk::geometry::distance_to_cone(&polar, &x);
        prop_assert!((dot(&x, &x) - d_polar.powi(2) - k.distance(&x).powi(2)).abs() <= 1e-9);
    }

    #[test]
    fn roots_satisfy_the_sign_condition(seed in any::<u64>()) {
        let Some(d) = interior_drift_law(seed) else { return Ok(()) };
        for u in [[1.0, 0.0], [0.0, 1.0]] {
            if let Some(root) = solve_su(&d, &u).unwrap() {
                prop_assert!(root.s < 0.0);
                prop_assert!(root.residual <= 1e-12);
                let t: Vec<f64> = u.iter().map(|v| root.s * v).collect();
                // After tilting by t_u the drift points out of D_u.
                prop_assert!(dot(&d.tilt(&t).drift(), &u) < 0.0);
            }
        }
    }

    #[test]
    fn rate_is_certified_and_extremal_max_agrees(seed in any::<u64>()) {
        let Some(d) = interior_drift_law(seed) else { return Ok(()) };
        let r = compute_rate(&d, &Pyramid::orthant(2)).unwrap();
        prop_assert!(r.rho > 0.0 && r.rho < 1.0);
        for m in r.records.iter().filter_map(|x| x.minimum.as_ref()) {
            prop_assert!(m.kkt.holds(1e-8));
        }
        prop_assert!((r.rho_extremal.unwrap() - r.rho).abs() <= 1e-9);
    }

    #[test]
    fn redundant_normals_do_not_change_the_rate(seed in any::<u64>(), extra in prop::collection::vec((0.05..1.0f64, 0.05..1.0f64), 1..4)) {
        let Some(d) = interior_drift_law(seed) else { return Ok(()) };
        let base = compute_rate(&d, &Pyramid::orthant(2)).unwrap().rho;
        let mut normals = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        normals.extend(extra.iter().map(|(a, b)| vec![*a, *b]));
        let got = compute_rate(&d, &Pyramid::new(&normals).unwrap()).unwrap().rho;
        prop_assert!((got - base).abs() <= 1e-9);
    }

    #[test]
    fn swapping_coordinates_preserves_the_rate(seed in any::<u64>()) {
        let Some(d) = interior_drift_law(seed) else { return Ok(()) };
        let a = d.as_atomic().unwrap();
        let swapped: Distribution = AtomicDistribution::new(
            a.points().iter().map(|p| vec![p[1], p[0]]).collect(),
            a.probs().to_vec(),
        ).unwrap().into();
        let r1 = compute_rate(&d, &Pyramid::orthant(2)).unwrap().rho;
        let r2 = compute_rate(&swapped, &Pyramid::orthant(2)).unwrap().rho;
        prop_assert!((r1 - r2).abs() <= 1e-12);
    }

    #[test]
    fn exterior_drift_rate_is_below_one(seed in any::<u64>()) {
        let d = lattice_law(seed);
        let cone = Pyramid::orthant(2);
        let m = d.drift();
        prop_assume!(m[0] < -0.05 || m[1] < -0.05);
        prop_assume!(validate_hypotheses(&d, &cone).all_pass());
        // Coercivity along each generator of the quadrant.
        prop_assume!(d.charges_open_halfspace(&[1.0, 0.0]) && d.charges_open_halfspace(&[0.0, 1.0]));
        let r = compute_rate(&d, &cone).unwrap();
        prop_assert_eq!(r.drift_class, DriftClass::Exterior);
        prop_assert!(r.rho < 1.0);
    }

    #[test]
    fn dp_matches_path_enumeration(seed in any::<u64>(), sx in 0i64..3, sy in 0i64..3) {
        let mut r = common::rng(seed);
        let atoms = r.random_range(2..=5);
        let d = common::random_lattice_law(&mut r, 2, atoms, 1);
        let cone = Pyramid::orthant(2);
        let model = LatticeModel::new(&d, &cone).unwrap();
        let curve = survival_dp(&model, &[sx, sy], 6).unwrap();
        let x = [sx as f64, sy as f64];
        for n in 0..=6 {
            let exact = common::survival_by_enumeration(d.as_atomic().unwrap(), cone.normals(), &x, n);
            prop_assert!((curve.values[n] - exact).abs() <= 1e-14, "n = {}: {} vs {}", n, curve.values[n], exact);
        }
    }

    #[test]
    fn dp_curve_is_a_survival_function(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let atoms = r.random_range(3..=6);
        let d = common::random_lattice_law(&mut r, 2, atoms, 2);
        let model = LatticeModel::new(&d, &Pyramid::orthant(2)).unwrap();
        let curve = survival_dp(&model, &[1, 1], 40).unwrap();
        prop_assert_eq!(curve.values[0], 1.0);
        for w in curve.values.windows(2) {
            prop_assert!(w[1] <= w[0] && w[1] >= 0.0);
        }
    }
}
