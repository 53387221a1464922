//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line and
//! then asserts, so `cargo test --test acceptance -- --nocapture` gives a
//! readable summary.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use pbh_core::approx::free_part;
use pbh_core::counterex::{run_blowup, BlowupExperiment, BlowupGrid, Variant};
use pbh_core::heatlab::{
    normal_derivative, solve_heat, solve_vc, GraphDomain, Grid, GridField, ScalarFn, SolveOptions, VcFields,
};
use pbh_core::obstacle::{obstacle_demo, ManufacturedCase, ObstacleDemo};
use pbh_core::parpoly::rat;
use pbh_core::regularity::{
    coefficient_error, ds_iteration_normalized, holder_exponent, quotient_field, scaling_seminorm_check, Center,
    ExponentStatus, IterationSetup,
};
use pbh_core::{build_source_map, caloric_basis, solve_approximating, ParPoly, UModel};
use rand::Rng;

fn verdict(id: u32, name: &str, ok: bool, elapsed: Duration, budget: Duration, detail: String) {
    let ok = ok && elapsed <= budget;
    println!(
        "{} criterion {id} ({name}): {detail} [{:.1}s of {:.0}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_1_exact_annihilation() {
    let start = Instant::now();
    let mut r = rng(0x5eed_0001);
    let mut hits = 0;
    for _ in 0..100 {
        let n = r.gen_range(1..=3);
        let k = r.gen_range(1..=6);
        let u = random_umodel(&mut r, n, k);
        let d = random_poly(&mut r, n, 0, k - 1);
        let free = random_free(&mut r, n, k);
        let map = build_source_map(&u, k).unwrap();
        let p = solve_approximating(&map, &d, &free, k).unwrap();
        let lhs = u.u_poly().multiply(&p).unwrap().heat_apply().truncate(k - 1);
        if lhs == d {
            hits += 1;
        }
    }
    verdict(
        1,
        "exact annihilation",
        hits == 100,
        start.elapsed(),
        Duration::from_secs(30),
        format!("{hits}/100 exact"),
    );
}

#[test]
fn criterion_2_caloric_basis_dimension() {
    let start = Instant::now();
    let mut bad = Vec::new();
    for n in 1..=3 {
        for k in 0..=6 {
            let basis = caloric_basis(n, k).unwrap();
            let caloric = basis.iter().all(|q| ParPoly::x_last(n).multiply(q).unwrap().heat_apply().is_zero());
            let independent = rational_rank(coefficient_matrix(&basis, n, k)) == basis.len();
            if basis.len() != free_count(n, k) || basis.len() != kernel_dimension(n, k) || !caloric || !independent {
                bad.push((n, k));
            }
        }
    }
    verdict(
        2,
        "caloric basis dimension",
        bad.is_empty(),
        start.elapsed(),
        Duration::from_secs(10),
        format!("21 (n, k) pairs, mismatches {bad:?}"),
    )
}

fn max_error(u: &GridField, exact: impl Fn(&[f64], f64) -> f64) -> f64 {
    let mut e = 0.0f64;
    for j in 0..u.n_levels() {
        for (_, x, v) in u.active(j) {
            e = e.max((v - exact(&x[..u.dim()], u.time(j))).abs());
        }
    }
    e
}

fn order_of(errs: &[f64]) -> f64 {
    (errs[0] / errs[errs.len() - 1]).log2() / (errs.len() - 1) as f64
}

fn sine_graph() -> pbh_core::heatlab::GraphFn {
    Arc::new(|x1, t| 0.05 * (x1 + t).sin())
}

#[test]
fn criterion_3_solver_convergence() {
    let start = Instant::now();
    let opts = SolveOptions::default();

    // n = 1: decaying sine mode, τ = h
    let sine = |x: &[f64], t: f64| (-PI * PI * t).exp() * (PI * x[0]).sin();
    let dom1 = GraphDomain::new(1, None, vec![0.5], 0.5, 0.0, 0.25).unwrap();
    let e1: Vec<f64> = (8..=10)
        .map(|p| {
            let h = 0.5f64.powi(p);
            max_error(&solve_heat(&dom1, &|x| sine(x, 0.0), None, None, Grid { h, tau: h }, &opts).unwrap(), sine)
        })
        .collect();

    // n = 2: caloric exponential on the curved domain, τ = h
    let expo = |x: &[f64], t: f64| (x[0] + x[1] + 2.0 * t).exp();
    let bc: ScalarFn = Arc::new(expo);
    let dom2 =
        GraphDomain::cylinder(2, Some(sine_graph()), vec![0.0, 0.0], 0.0, 1.0).unwrap().with_curvature_bound(0.1);
    let e2: Vec<f64> = (5..=7)
        .map(|p| {
            let h = 0.5f64.powi(p);
            let u =
                solve_heat(&dom2, &|x| expo(x, dom2.t_start()), Some(&bc), None, Grid { h, tau: h }, &opts).unwrap();
            max_error(&u, expo)
        })
        .collect();

    // curved self-convergence: no closed form, differences of successive grids
    let data: ScalarFn = Arc::new(|x: &[f64], t| x[1] - 0.05 * (x[0] + t).sin() + 0.25 * x[0] * x[0] + 0.5 * t);
    let probe = |u: &GridField| -> Vec<f64> {
        let t = u.time(u.n_levels() - 1);
        (0..9)
            .flat_map(|i| (0..9).map(move |j| (i, j)))
            .filter_map(|(i, j)| u.sample(&[-0.5 + 0.125 * i as f64, -0.3 + 0.125 * j as f64], t))
            .collect()
    };
    let fields: Vec<Vec<f64>> = (5..=7)
        .map(|p| {
            let h = 0.5f64.powi(p);
            let u =
                solve_heat(&dom2, &|x| data(x, dom2.t_start()), Some(&data), None, Grid { h, tau: h }, &opts).unwrap();
            probe(&u)
        })
        .collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let d1 = diff(&fields[0], &fields[1]);
    let d2 = diff(&fields[1], &fields[2]);
    let self_order = (d1 / d2).log2();

    // variable-coefficient path with A = I matches the heat path bit for bit
    let grid = Grid { h: 1.0 / 32.0, tau: 1.0 / 32.0 };
    let src: ScalarFn = Arc::new(|x: &[f64], t| (x[0] - t).cos());
    let heat = solve_heat(&dom2, &|x| data(x, dom2.t_start()), Some(&data), Some(src.clone()), grid, &opts).unwrap();
    let fields_vc =
        VcFields { a: Some(Arc::new(|_: &[f64], _| [[1.0, 0.0], [0.0, 1.0]])), ..VcFields::heat(Some(src)) };
    let vc = solve_vc(&dom2, &fields_vc, &|x| data(x, dom2.t_start()), Some(&data), grid, &opts).unwrap();
    let bitwise = (0..heat.n_levels())
        .all(|j| heat.level_values(j).iter().zip(vc.level_values(j)).all(|(a, b)| a.to_bits() == b.to_bits()));

    let (o1, o2) = (order_of(&e1), order_of(&e2));
    let ok = [o1, o2, self_order].iter().all(|o| (o - 2.0).abs() <= 0.3) && bitwise;
    verdict(
        3,
        "solver convergence",
        ok,
        start.elapsed(),
        Duration::from_secs(120),
        format!("orders: 1D sine {o1:.2}, 2D curved exponential {o2:.2}, curved self-convergence {self_order:.2}; A=I bitwise {bitwise}"),
    );
}

#[test]
fn criterion_4_quotient_regularity() {
    let start = Instant::now();
    // exact pair on the half-line: the quotient is the polynomial x² + 6t
    let half = GraphDomain::new(1, Some(Arc::new(|_, _| 0.0)), vec![0.0], 1.0, -1.0, 0.0).unwrap();
    let g1 = Grid { h: 1.0 / 128.0, tau: 1.0 / 1024.0 };
    let u = GridField::from_fn(&half, g1, |x, _| x[0]).unwrap();
    let v = GridField::from_fn(&half, g1, |x, t| x[0].powi(3) + 6.0 * x[0] * t).unwrap();
    let q = quotient_field(&u, &v, 1.0).unwrap();
    let origin = Center::new(vec![0.0], 0.0);
    let exact = holder_exponent(&q, &origin, 2, &[0.5, 0.35, 0.25, 0.18, 0.125]).unwrap();
    let exact_defect = exact.max_relative_defect(q.sup_norm());
    let capped = exact.status == ExponentStatus::Capped && exact_defect <= 1e-10;

    // solved pair on Q_{1/2} cut by x2 = 0.05 sin(x1 + t)
    let dom = GraphDomain::cylinder(2, Some(sine_graph()), vec![0.0, 0.0], 0.0, 0.5).unwrap().with_curvature_bound(0.1);
    let h = 1.0 / 128.0;
    let grid = Grid { h, tau: h / 4.0 };
    let opts = SolveOptions { rannacher_steps: 2, max_principle_tol: None, ..SolveOptions::default() };
    let bc_u: ScalarFn = Arc::new(|x: &[f64], t| x[1] - 0.05 * (x[0] + t).sin());
    let bc_v: ScalarFn = Arc::new(|x: &[f64], t| (x[1] - 0.05 * (x[0] + t).sin()) * (1.0 + x[0] + x[1] + x[0] * x[0]));
    let t0 = dom.t_start();
    let su = solve_heat(&dom, &|x| bc_u(x, t0), Some(&bc_u), None, grid, &opts).unwrap();
    let sv = solve_heat(&dom, &|x| bc_v(x, t0), Some(&bc_v), None, grid, &opts).unwrap();
    let hopf = normal_derivative(&su, 0.0, 0.0, Some(&bc_u)).unwrap();
    let sq = quotient_field(&su, &sv, 2.0).unwrap();
    let center = Center::new(vec![0.0, 0.0], 0.0);
    let radii1 = [0.4, 0.3, 0.22, 0.16, 0.12, 0.09, 0.0625, 0.045, 0.032];
    let radii2 = [0.4, 0.3, 0.22, 0.16, 0.12, 0.09, 0.0625];
    let k1 = holder_exponent(&sq, &center, 1, &radii1).unwrap().exponent.unwrap_or(f64::INFINITY);
    let k2 = holder_exponent(&sq, &center, 2, &radii2).unwrap().exponent.unwrap_or(f64::INFINITY);
    let alpha = 0.5;
    let ok = capped && hopf > 0.5 && k1 >= 1.0 + alpha - 0.15 && k2 >= 2.0 + alpha - 0.2;
    verdict(
        4,
        "quotient regularity",
        ok,
        start.elapsed(),
        Duration::from_secs(180),
        format!(
            "exact pair capped {capped} (relative defect {exact_defect:.1e}); solved pair D_n u = {hopf:.3}, \
             exponent k=1 {k1:.2} (need >= {:.2}), k=2 {k2:.2} (need >= {:.2})",
            1.0 + alpha - 0.15,
            2.0 + alpha - 0.2
        ),
    );
}

#[test]
fn criterion_5_iteration_contraction() {
    let start = Instant::now();
    let half = GraphDomain::new(1, Some(Arc::new(|_, _| 0.0)), vec![0.0], 1.0, -1.0, 0.0).unwrap();
    let grid = Grid { h: 1.0 / 256.0, tau: 1.0 / 4096.0 };
    let u = GridField::from_fn(&half, grid, |x, _| x[0]).unwrap();
    let v = GridField::from_fn(&half, grid, |x, t| x[0].powi(3) + 6.0 * x[0] * t).unwrap();
    let setup = IterationSetup {
        center: Center::new(vec![0.0], 0.0),
        k: 2,
        alpha: 0.5,
        rho: 0.5,
        r0: 0.5,
        steps: 5,
        source: build_source_map(&UModel::flat(1), 2).unwrap(),
        d: ParPoly::zero(1),
    };
    let trace = ds_iteration_normalized(&u, &v, &setup).unwrap();
    let bound = 0.5f64.powf(3.5) * 1.2;
    let ratios = trace.contraction_ratios();
    let contracting = !ratios.is_empty() && ratios.iter().all(|&r| r <= bound);

    let target = &(&ParPoly::var(1, 0) * &ParPoly::var(1, 0)) + &ParPoly::time(1).scale(&rat(6, 1));
    let errs: Vec<f64> = trace
        .steps
        .iter()
        .map(|s| {
            coefficient_error(&s.poly.scale(&pbh_core::parpoly::rat_from_f64(1.0 / trace.v_scale).unwrap()), &target)
        })
        .collect();
    let floor = 1e-8;
    let monotone = errs.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor) && *errs.last().unwrap() <= floor;
    // the free part of the last polynomial is the free part of the target
    let free_ok = free_part(&trace.steps.last().unwrap().poly).len() <= 2;
    verdict(
        5,
        "iteration contraction",
        contracting && monotone && free_ok,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "ratios {:?} (bound {bound:.4}), coefficient errors {:?}",
            ratios.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>(),
            errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_6_counterexample_exponent() {
    let grid = BlowupGrid { h: 2f64.powi(-9), tau: 2f64.powi(-14), rannacher_steps: 4 };
    let mut lines = Vec::new();
    let mut ok = true;
    let start = Instant::now();
    for (alpha, beta) in [(1.0, 0.5), (0.75, 0.25)] {
        for variant in [Variant::Base, Variant::Corner] {
            let run_start = Instant::now();
            let exp = BlowupExperiment::new(1, alpha, beta, variant);
            let res = run_blowup(&exp, grid).unwrap();
            let target = -(alpha - beta);
            let rel = ((res.fitted_exponent - target) / target).abs();
            let inside = res.samples.iter().all(|s| {
                let o = s.oracle.as_ref().unwrap();
                s.ratio >= 0.95 * o.ratio_lo && s.ratio <= 1.05 * o.ratio_hi
            });
            let pass = rel <= 0.15 && inside && res.monotone && run_start.elapsed() < Duration::from_secs(60);
            ok &= pass;
            lines.push(format!(
                "({alpha}, {beta}) {variant:?}: exponent {:.3} vs {target} ({:.1}%), in brackets {inside}",
                res.fitted_exponent,
                100.0 * rel
            ));
        }
    }
    verdict(6, "counterexample exponent", ok, start.elapsed(), Duration::from_secs(240), lines.join("; "));
}

#[test]
fn criterion_7_scaling_identity() {
    let start = Instant::now();
    let dom = GraphDomain::cylinder(2, Some(sine_graph()), vec![0.0, 0.0], 0.0, 1.0).unwrap().with_curvature_bound(0.1);
    let data: ScalarFn = Arc::new(|x: &[f64], t| {
        (x[1] - 0.05 * (x[0] + t).sin()) * (1.0 + 0.5 * x[0]) + 0.3 * (x[1] * x[1] - x[0] * x[0])
    });
    let h = 1.0 / 64.0;
    let u =
        solve_heat(&dom, &|x| data(x, dom.t_start()), Some(&data), None, Grid { h, tau: h }, &SolveOptions::default())
            .unwrap();
    let center = Center::new(vec![0.1, 0.5], 0.0);
    let alpha = 0.5;
    let mut ok = true;
    let mut lines = Vec::new();
    for r0 in [0.5, 0.25] {
        let s = scaling_seminorm_check(&u, &center, r0, alpha, 0.5, 2.0).unwrap();
        let err = s.relative_error().unwrap_or(f64::INFINITY);
        ok &= err <= 0.10;
        lines.push(format!(
            "r0 = {r0}: ratio {:.4} vs {:.4} ({:.1}%)",
            s.ratio.unwrap_or(f64::NAN),
            s.expected,
            100.0 * err
        ));
    }
    verdict(7, "scaling identity", ok, start.elapsed(), Duration::from_secs(120), lines.join("; "));
}

#[test]
fn criterion_8_obstacle_demo() {
    let start = Instant::now();
    let flat = obstacle_demo(&ManufacturedCase::flat(), &ObstacleDemo::default()).unwrap();
    let flat_zero = flat.levels.iter().all(|l| l.err_grad < 1e-13 && l.err_dt < 1e-13);
    let r = obstacle_demo(&ManufacturedCase::sine(0.05), &ObstacleDemo::default()).unwrap();
    let order = r.observed_order().unwrap_or(0.0);
    // error constant: h² times a bound on the third derivatives of f
    let within = r.levels.iter().all(|l| l.err_grad.max(l.err_dt).max(l.err_f) <= 0.05 * l.h * l.h);
    verdict(
        8,
        "obstacle demo",
        order >= 1.7 && within && flat_zero,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "orders grad {:.2}, dt {:.2}, f {:.2}; finest errors {:.1e}/{:.1e}/{:.1e}",
            r.order_grad,
            r.order_dt,
            r.order_f,
            r.levels.last().unwrap().err_grad,
            r.levels.last().unwrap().err_dt,
            r.levels.last().unwrap().err_f
        ),
    );
}
