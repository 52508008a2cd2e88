//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use conewalk::catalog::{table1, QuadrantModel, COLUMNS};
use conewalk::distributions::{AtomicDistribution, Distribution};
use conewalk::geometry::{distance_to_cone, extremal_directions, GeneratedCone, Pyramid};
use conewalk::linalg::{dot, norm};
use conewalk::montecarlo::{survival_mc, McConfig};
use conewalk::oracle_dp::{extract_rate, sandwich_bounds, survival_dp, DpWalker, LatticeModel};
use conewalk::rate::{
    closed_form_gaussian, closed_form_weighted, compute_rate, compute_rate_with,
    gaussian_sector_model, Branch, RateOptions, RateReport, WeightedSteps,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rate(d: &Distribution, p: &Pyramid) -> Result<RateReport, String> {
    compute_rate(d, p).map_err(|e| e.to_string())
}

fn quadrant_columns(r: &RateReport) -> [Option<f64>; 5] {
    let e1 = r.record_for(&[1.0, 0.0]);
    let e2 = r.record_for(&[0.0, 1.0]);
    [
        e1.and_then(|x| x.s_u()),
        e1.and_then(|x| x.rho_u()),
        e2.and_then(|x| x.s_u()),
        e2.and_then(|x| x.rho_u()),
        Some(r.rho),
    ]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut worst_ok: f64 = 0.0;
    for row in table1() {
        let report = rate(&row.distribution(), &row.pyramid())?;
        for ((got, published), column) in quadrant_columns(&report)
            .iter()
            .zip(row.columns())
            .zip(COLUMNS)
        {
            match got {
                Some(v) if (v - published.value).abs() <= 1e-9 => {
                    worst_ok = worst_ok.max((v - published.value).abs());
                }
                Some(v) => mismatches.push(format!(
                    "row {} {column}: computed {v:.15}, reference {} = {:.15}",
                    row.row, published.formula, published.value
                )),
                None => mismatches.push(format!("row {} {column}: not computed", row.row)),
            }
        }
    }
    let elapsed = start.elapsed();
    let timing_ok = elapsed < Duration::from_secs(5);
    let mut detail = format!(
        "60 entries, {} mismatches (max |Δ| among matches {worst_ok:.1e}), {:.2} s",
        mismatches.len(),
        elapsed.as_secs_f64()
    );
    for m in &mismatches {
        detail.push_str("\n      ");
        detail.push_str(m);
    }
    check(mismatches.is_empty() && timing_ok, detail)
}

fn criterion_2() -> Outcome {
    let mut r = common::rng(2);
    let mut worst: f64 = 0.0;
    let (mut both, mut one) = (0, 0);
    while both < 50 || one < 20 {
        let w = if both < 50 {
            let p = common::dirichlet(&mut r, 5);
            WeightedSteps {
                north_west: p[0],
                north: p[1],
                north_east: p[2],
                east: p[3],
                south_east: p[4],
            }
        } else {
            let p = common::dirichlet(&mut r, 4);
            // Alternate which corner weight vanishes.
            let (nw, se) = if one % 2 == 0 {
                (0.0, p[3])
            } else {
                (p[3], 0.0)
            };
            WeightedSteps {
                north_west: nw,
                north: p[0],
                north_east: p[1],
                east: p[2],
                south_east: se,
            }
        };
        let Ok(expected) = closed_form_weighted(&w) else {
            continue; // drift not interior
        };
        let d = w.distribution();
        let report = rate(&d, &Pyramid::orthant(2))?;
        let err = (report.rho - expected).abs();
        if err > 1e-8 {
            return Err(format!(
                "weights {w:?}: computed {}, closed form {expected}",
                report.rho
            ));
        }
        worst = worst.max(err);
        if both < 50 {
            both += 1;
        } else {
            one += 1;
        }
    }
    Ok(format!(
        "50 two-corner + 20 one-corner weight vectors, max |Δ| {worst:.1e}"
    ))
}

/// Distance from `x` to the sector `{θ ∈ [0, α]}` by elementary geometry.
fn sector_distance(alpha: f64, x: &[f64]) -> f64 {
    let rays = [[1.0, 0.0], [alpha.cos(), alpha.sin()]];
    let inside = x[1] >= 0.0 && alpha.sin() * x[0] - alpha.cos() * x[1] >= 0.0;
    if inside {
        return 0.0;
    }
    rays.iter()
        .map(|r| {
            let t = dot(x, r).max(0.0);
            norm(&[x[0] - t * r[0], x[1] - t * r[1]])
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_3() -> Outcome {
    let mut r = common::rng(3);
    let mut worst_rate: f64 = 0.0;
    let mut sectors = Vec::new();
    for _ in 0..20 {
        let alpha = r.random_range(0.1..=PI);
        let beta = alpha * r.random_range(0.02..0.98);
        let radius = r.random_range(0.2..3.0);
        let (cone, law) = gaussian_sector_model(alpha, beta, radius).map_err(|e| e.to_string())?;
        let expected = closed_form_gaussian(alpha, beta, radius)
            .map_err(|e| e.to_string())?
            .rho;
        let got = rate(&law, &cone)?.rho;
        let err = (got - expected).abs();
        if err > 1e-6 {
            return Err(format!(
                "(α, β, r) = ({alpha}, {beta}, {radius}): computed {got}, closed form {expected}"
            ));
        }
        worst_rate = worst_rate.max(err);
        sectors.push((alpha, cone));
    }
    let mut worst_moreau: f64 = 0.0;
    for i in 0..100 {
        let (alpha, cone) = &sectors[i % sectors.len()];
        let x = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        let polar_gens: Vec<Vec<f64>> = cone
            .normals()
            .iter()
            .map(|u| u.iter().map(|v| -v).collect())
            .collect();
        let d_polar = distance_to_cone(
            &GeneratedCone::new(&polar_gens).map_err(|e| e.to_string())?,
            &x,
        );
        let d_cone = sector_distance(*alpha, &x);
        let residual = (dot(&x, &x) - d_polar * d_polar - d_cone * d_cone).abs();
        worst_moreau = worst_moreau.max(residual);
    }
    check(
        worst_moreau <= 1e-9,
        format!("20 sectors max |Δρ| {worst_rate:.1e}; Moreau residual max {worst_moreau:.1e} over 100 points"),
    )
}

fn criterion_4() -> Outcome {
    let rows: Vec<QuadrantModel> = table1()
        .into_iter()
        .filter(|r| [1, 3, 7, 12].contains(&r.row))
        .collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for row in rows {
        let start = Instant::now();
        let theory = rate(&row.distribution(), &row.pyramid())?.rho;
        let model =
            LatticeModel::new(&row.distribution(), &row.pyramid()).map_err(|e| e.to_string())?;
        let curve = survival_dp(&model, &[0, 0], 600).map_err(|e| e.to_string())?;
        let est = extract_rate(&curve, (150, 598)).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let rel = (est.rho_hat - theory).abs() / theory;
        let ok = rel <= 0.02 && elapsed < Duration::from_secs(60);
        pass &= ok;
        parts.push(format!(
            "model {}: ρ̂ {:.6} vs ρ {:.6} ({:.3}%, {:.1} s)",
            row.row,
            est.rho_hat,
            theory,
            100.0 * rel,
            elapsed.as_secs_f64()
        ));
    }
    check(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let d: Distribution =
        AtomicDistribution::uniform(vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]])
            .unwrap()
            .into();
    let cone = Pyramid::orthant(2);
    // No step from the origin stays in the quadrant, so A3 fails at the
    // origin; the DP is started inside.
    let opts = RateOptions {
        require_reach_from_origin: false,
        ..RateOptions::default()
    };
    let report = compute_rate_with(&d, &cone, &opts).map_err(|e| e.to_string())?;
    if report.branch != Branch::DualConeMinimum {
        return Err(format!(
            "expected the dual-cone branch, got {:?}",
            report.branch
        ));
    }
    let model = LatticeModel::new(&d, &cone).map_err(|e| e.to_string())?;
    let curve = survival_dp(&model, &[20, 20], 600).map_err(|e| e.to_string())?;
    let est = extract_rate(&curve, (150, 598)).map_err(|e| e.to_string())?;
    let rel = (est.rho_hat - report.rho).abs() / report.rho;
    check(
        rel <= 0.02 && report.rho < 1.0,
        format!(
            "ρ = min over K* of L = {:.9}; DP ratio limit from (20,20) {:.6} ({:.3}%)",
            report.rho,
            est.rho_hat,
            100.0 * rel
        ),
    )
}

/// `t0 ≠ 0` with `L(t0) = 1` on a random ray, by bisection.
fn unit_level_point(d: &Distribution, r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    loop {
        let theta = r.random_range(0.0..2.0 * PI);
        let mut v = vec![theta.cos(), theta.sin()];
        let m = d.drift();
        if dot(&m, &v).abs() < 1e-3 {
            continue;
        }
        if dot(&m, &v) > 0.0 {
            v = v.iter().map(|x| -x).collect();
        }
        let at = |s: f64| d.laplace(&[s * v[0], s * v[1]]);
        let mut hi = 1.0;
        while at(hi) <= 1.0 && hi < 1e3 {
            hi *= 2.0;
        }
        if at(hi) <= 1.0 {
            continue; // no atom on the positive side of v
        }
        let mut lo = 0.0;
        // L(s v) < 1 just right of 0 and increases past the root.
        while at(lo + 1e-12) >= 1.0 {
            lo += 1e-12;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return vec![hi * v[0], hi * v[1]];
    }
}

fn criterion_6() -> Outcome {
    let mut r = common::rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let atoms = r.random_range(3..=5);
        let d = common::random_lattice_law(&mut r, 2, atoms, 2);
        let t0 = unit_level_point(&d, &mut r);
        let x = vec![r.random_range(0..3) as f64, r.random_range(0..3) as f64];
        let tilted = d.tilt(&t0);
        let base = d.as_atomic().unwrap();
        let star = tilted.distribution().as_atomic().unwrap();
        let l0 = tilted.laplace_at_t0;
        for k in 1..=3 {
            let scale = l0.powi(k as i32) * dot(&t0, &x).exp();
            // f = indicator of a single path, and of the survival event.
            let (mut lhs_event, mut rhs_event) = (0.0, 0.0);
            for ((path, p), (_, q)) in common::paths(base, k)
                .into_iter()
                .zip(common::paths(star, k))
            {
                let s = common::positions(base, &x, &path);
                let rhs = scale * q * (-dot(&t0, s.last().unwrap())).exp();
                worst = worst.max((p - rhs).abs());
                if s.iter().all(|y| y[0] >= 0.0 && y[1] >= 0.0) {
                    lhs_event += p;
                    rhs_event += rhs;
                }
            }
            worst = worst.max((lhs_event - rhs_event).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("10 tilt points, paths of length 1..3, max |Δ| {worst:.1e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut r = common::rng(7);
    let mut worst: f64 = 0.0;
    for row in table1() {
        let base = rate(&row.distribution(), &row.pyramid())?.rho;
        let mut normals = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        for _ in 0..3 {
            let u = vec![r.random_range(0.1..1.0), r.random_range(0.1..1.0)];
            let at = r.random_range(0..=normals.len());
            normals.insert(at, u);
        }
        let cone = Pyramid::new(&normals).map_err(|e| e.to_string())?;
        let got = rate(&row.distribution(), &cone)?.rho;
        worst = worst.max((got - base).abs());
    }
    check(
        worst <= 1e-9,
        format!("12 models with 3 redundant normals, max |Δρ| {worst:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let row = &table1()[0];
    let model =
        LatticeModel::new(&row.distribution(), &row.pyramid()).map_err(|e| e.to_string())?;
    let dp = survival_dp(&model, &[0, 0], 50).map_err(|e| e.to_string())?;
    let cfg = McConfig {
        chains: 1_000_000,
        horizon: 50,
        seed: 20_240_917,
        start: vec![0.0, 0.0],
    };
    let mc = survival_mc(&row.distribution(), &row.pyramid(), &cfg).map_err(|e| e.to_string())?;
    let inside = (1..=50)
        .filter(|&n| {
            let (lo, hi) = mc.intervals[n];
            lo <= dp.values[n] && dp.values[n] <= hi
        })
        .count();
    check(
        inside >= 45,
        format!("model 1, 10^6 chains: DP inside the 95% interval at {inside}/50 points"),
    )
}

fn criterion_9() -> Outcome {
    let mut r = common::rng(9);
    let mut laws: Vec<Distribution> = table1().iter().map(|m| m.distribution()).collect();
    for _ in 0..20 {
        let atoms = r.random_range(3..=6);
        laws.push(common::random_lattice_law(&mut r, 2, atoms, 2));
    }
    laws.push(
        conewalk::distributions::GaussianDistribution::new(vec![0.3, -0.8])
            .unwrap()
            .into(),
    );

    // Convexity of L and its gradient against central differences.
    let (mut convexity, mut gradient): (f64, f64) = (0.0, 0.0);
    for d in &laws {
        for _ in 0..25 {
            let t: Vec<f64> = (0..2).map(|_| r.random_range(-2.0..2.0)).collect();
            let s: Vec<f64> = (0..2).map(|_| r.random_range(-2.0..2.0)).collect();
            let lam = r.random_range(0.0..1.0);
            let mid: Vec<f64> = t
                .iter()
                .zip(&s)
                .map(|(a, b)| lam * a + (1.0 - lam) * b)
                .collect();
            let chord = lam * d.laplace(&t) + (1.0 - lam) * d.laplace(&s);
            convexity = convexity.max((d.laplace(&mid) - chord) / chord.max(1.0));
            let g = d.grad_laplace(&t);
            for i in 0..2 {
                let h = 1e-6;
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (d.laplace(&tp) - d.laplace(&tm)) / (2.0 * h);
                gradient = gradient.max((fd - g[i]).abs() / g[i].abs().max(1.0));
            }
        }
    }

    // KKT residuals of every dual-cone minimum over the table models.
    let mut kkt_worst: f64 = 0.0;
    for row in table1() {
        let report = rate(&row.distribution(), &row.pyramid())?;
        for m in report.records.iter().filter_map(|x| x.minimum.as_ref()) {
            kkt_worst = kkt_worst
                .max(-m.kkt.min_directional_derivative)
                .max(m.kkt.max_complementarity);
        }
    }

    // Double duality: the pyramid on the extremal generators of K* has the
    // same points as K.
    let mut duality_disagreements = 0;
    for _ in 0..20 {
        let dim = r.random_range(2..=3);
        let axis: Vec<f64> = (0..dim).map(|_| r.random_range(0.5..1.0)).collect();
        let mut normals = Vec::new();
        while normals.len() < dim + 3 {
            let u: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            if dot(&u, &axis) > 0.3 * norm(&u) * norm(&axis) {
                normals.push(u);
            }
        }
        let k = Pyramid::new(&normals).map_err(|e| e.to_string())?;
        let dual = k.dual();
        let ext = extremal_directions(&dual).map_err(|e| e.to_string())?;
        let again =
            Pyramid::new(dual.restrict(&ext.indices).generators()).map_err(|e| e.to_string())?;
        for _ in 0..50 {
            let x: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            if k.contains(&x, 1e-9) != again.contains(&x, 1e-9) {
                duality_disagreements += 1;
            }
        }
    }

    // DP mass conservation.
    let mut conservation: f64 = 0.0;
    for row in table1().iter().filter(|m| [1, 5, 12].contains(&m.row)) {
        let model =
            LatticeModel::new(&row.distribution(), &row.pyramid()).map_err(|e| e.to_string())?;
        let mut w = DpWalker::new(&model, &[0, 0], 200).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let (before, exited) = (w.mass(), w.exit_mass());
            w.advance();
            conservation = conservation.max((before - exited - w.mass()).abs());
        }
    }

    // Half-space sandwich for model 1.
    let row = &table1()[0];
    let model =
        LatticeModel::new(&row.distribution(), &row.pyramid()).map_err(|e| e.to_string())?;
    let sandwich = sandwich_bounds(&model, &[0, 0], 50, 600).map_err(|e| e.to_string())?;
    let sandwich_violation = sandwich
        .iter()
        .map(|s| (s.lower - s.delta_hat).max(s.delta_hat - s.upper))
        .fold(f64::NEG_INFINITY, f64::max);

    let pass = convexity <= 1e-12
        && gradient <= 1e-6
        && kkt_worst <= 1e-8
        && duality_disagreements == 0
        && conservation <= 1e-12
        && sandwich_violation <= 1e-10;
    check(
        pass,
        format!(
            "convexity excess {convexity:.1e}, gradient error {gradient:.1e}, KKT {kkt_worst:.1e}, \
             double-duality disagreements {duality_disagreements}/1000, mass defect {conservation:.1e}, \
             sandwich violation {sandwich_violation:.1e}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("quadrant table reproduction", criterion_1),
        ("weighted closed form", criterion_2),
        ("Gaussian closed form and Moreau identity", criterion_3),
        ("DP rate oracle", criterion_4),
        ("exterior-drift branch", criterion_5),
        ("change-of-measure identity", criterion_6),
        ("representation independence", criterion_7),
        ("Monte Carlo agrees with DP", criterion_8),
        ("property suites", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag} {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
