//! Experiment drivers: each turns a validated config into a JSON result and
//! a set of CSV tables held in memory.

use pbh_core::approx::{free_indices, FreeAssignment};
use pbh_core::counterex::{run_blowup, BlowupExperiment, BlowupGrid};
use pbh_core::heatlab::{normal_derivative, solve_heat, GridField, SolveOptions};
use pbh_core::obstacle::{obstacle_demo, ManufacturedCase};
use pbh_core::parpoly::rat;
use pbh_core::regularity::{
    ds_iteration, ds_iteration_normalized, holder_exponent, quotient_field, scaling_seminorm_check, Center,
    IterationSetup,
};
use pbh_core::{build_source_map, caloric_basis, solve_approximating, ParIndex, ParPoly, Rational, UModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::*;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("{context}: {message}")]
    Numerical { context: &'static str, message: String },
}

fn numerical<E: std::fmt::Display>(context: &'static str) -> impl FnOnce(E) -> RunError {
    move |e| RunError::Numerical { context, message: e.to_string() }
}

pub struct Outcome {
    pub result: Value,
    /// `(file name, CSV bytes)`.
    pub tables: Vec<(String, Vec<u8>)>,
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome, RunError> {
    let errors = config.validate();
    if !errors.is_empty() {
        return Err(RunError::Validation(errors));
    }
    match config {
        ExperimentConfig::VerifyApprox(c) => verify_approx(c),
        ExperimentConfig::CaloricBasis(c) => basis(c),
        ExperimentConfig::Solve(c) => solve(c),
        ExperimentConfig::HarnackExponent(c) => harnack(c),
        ExperimentConfig::Iterate(c) => iterate(c),
        ExperimentConfig::Counterexample(c) => counterexample(c),
        ExperimentConfig::ScalingCheck(c) => scaling(c),
        ExperimentConfig::ObstacleDemo(c) => obstacle(c),
    }
}

fn csv_text(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out.into_bytes()
}

fn small_rational(r: &mut ChaCha8Rng, num: i64, den: i64) -> Rational {
    let d: i64 = r.gen_range(1..=12);
    let max = num * d / den;
    rat(r.gen_range(-max..=max), d)
}

fn verify_approx(c: &VerifyApprox) -> Result<Outcome, RunError> {
    let mut r = ChaCha8Rng::seed_from_u64(c.seed);
    let (n, k) = (c.n, c.k);
    let mut exact = 0;
    let mut rows = Vec::with_capacity(c.instances);
    for i in 0..c.instances {
        let mut p1 = ParPoly::zero(n);
        for idx in ParIndex::enumerate(n, k.max(2)) {
            if idx.wdeg() >= 2 && r.gen_bool(0.4) {
                p1.add_term(idx, small_rational(&mut r, 1, 4));
            }
        }
        let delta = p1.norm().max(rat(1, 1));
        let u = UModel::new(p1, delta).map_err(numerical("u-model"))?;
        let mut d = ParPoly::zero(n);
        for idx in ParIndex::enumerate(n, k - 1) {
            if r.gen_bool(0.5) {
                d.add_term(idx, small_rational(&mut r, 3, 1));
            }
        }
        let mut free = FreeAssignment::new();
        for idx in free_indices(n, k) {
            if r.gen_bool(0.6) {
                free.insert(idx, small_rational(&mut r, 2, 1));
            }
        }
        let map = build_source_map(&u, k).map_err(numerical("source map"))?;
        let p = solve_approximating(&map, &d, &free, k).map_err(numerical("approximating solve"))?;
        let residual = &u.u_poly().multiply(&p).map_err(numerical("product"))?.heat_apply().truncate(k - 1) - &d;
        let ok = residual.is_zero();
        exact += ok as usize;
        rows.push(format!("{i},{ok},{},{}", p.len(), residual.len()));
    }
    Ok(Outcome {
        result: json!({ "n": n, "k": k, "instances": c.instances, "exact": exact, "all_exact": exact == c.instances }),
        tables: vec![("instances.csv".into(), csv_text("instance,exact,terms,residual_terms", rows))],
    })
}

fn basis(c: &CaloricBasis) -> Result<Outcome, RunError> {
    let b = caloric_basis(c.n, c.k).map_err(numerical("caloric basis"))?;
    let free = free_indices(c.n, c.k);
    let caloric = b.iter().all(|q| ParPoly::x_last(c.n).multiply(q).is_ok_and(|p| p.heat_apply().is_zero()));
    let rows = free.iter().zip(&b).map(|(idx, q)| format!("{idx},\"{q}\""));
    Ok(Outcome {
        result: json!({
            "n": c.n,
            "k": c.k,
            "size": b.len(),
            "all_caloric": caloric,
            "basis": b.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        }),
        tables: vec![("basis.csv".into(), csv_text("free_index,polynomial", rows))],
    })
}

fn field_rows(u: &GridField, levels: LevelOutput) -> Vec<u8> {
    let n = u.dim();
    let header = if n == 1 { "level,t,x1,value" } else { "level,t,x1,x2,value" };
    let range = match levels {
        LevelOutput::All => 0..u.n_levels(),
        LevelOutput::Final => u.n_levels() - 1..u.n_levels(),
    };
    let mut rows = Vec::new();
    for j in range {
        let t = u.time(j);
        for (_, x, v) in u.active(j) {
            let xs = x[..n].iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(",");
            rows.push(format!("{j},{t:e},{xs},{v:e}"));
        }
    }
    csv_text(header, rows)
}

fn solve(c: &Solve) -> Result<Outcome, RunError> {
    let dom = c.domain.build().map_err(numerical("domain"))?;
    let data = c.data.function(&c.domain);
    let opts = SolveOptions { scheme: c.scheme, rannacher_steps: c.rannacher_steps, ..SolveOptions::default() };
    let t0 = dom.t_start();
    let u =
        solve_heat(&dom, &|x| data(x, t0), Some(&data), None, c.grid.grid(), &opts).map_err(numerical("heat solve"))?;
    let error = c.data.is_caloric(&c.domain).then(|| {
        let mut e = 0.0f64;
        for j in 0..u.n_levels() {
            for (_, x, v) in u.active(j) {
                e = e.max((v - data(&x[..u.dim()], u.time(j))).abs());
            }
        }
        e
    });
    Ok(Outcome {
        result: json!({
            "levels": u.n_levels(),
            "sup_norm": u.sup_norm(),
            "max_error_vs_data": error,
            "diagnostics": u.diagnostics(),
        }),
        tables: vec![("field.csv".into(), field_rows(&u, c.levels))],
    })
}

fn solve_pair(
    domain: &DomainSpec,
    grid: GridSpec,
    u_data: &DataSpec,
    v_data: &DataSpec,
    rannacher_steps: usize,
) -> Result<(GridField, GridField, pbh_core::heatlab::ScalarFn), RunError> {
    let dom = domain.build().map_err(numerical("domain"))?;
    let opts = SolveOptions { rannacher_steps, max_principle_tol: None, ..SolveOptions::default() };
    let t0 = dom.t_start();
    let fu = u_data.function(domain);
    let fv = v_data.function(domain);
    let u = solve_heat(&dom, &|x| fu(x, t0), Some(&fu), None, grid.grid(), &opts).map_err(numerical("solve u"))?;
    let v = solve_heat(&dom, &|x| fv(x, t0), Some(&fv), None, grid.grid(), &opts).map_err(numerical("solve v"))?;
    Ok((u, v, fu))
}

fn harnack(c: &HarnackExponent) -> Result<Outcome, RunError> {
    let (u, v, fu) = solve_pair(&c.domain, c.grid, &c.u_data, &c.v_data, c.rannacher_steps)?;
    let xp = if c.domain.dim == 2 { c.center.x[0] } else { 0.0 };
    let hopf = normal_derivative(&u, xp, c.center.t, Some(&fu)).ok();
    let q = quotient_field(&u, &v, c.margin).map_err(numerical("quotient"))?;
    let center = Center::new(c.center.x.clone(), c.center.t);
    let report = holder_exponent(&q, &center, c.k, &c.radii).map_err(numerical("exponent fit"))?;
    let mut table = Vec::new();
    report.write_csv(&mut table).map_err(numerical("csv"))?;
    Ok(Outcome {
        result: json!({
            "normal_derivative_u": hopf,
            "exponent": report.exponent,
            "exponent_stderr": report.exponent_stderr,
            "status": report.status,
            "floor": report.floor,
            "residuals": report.residuals,
            "radii": report.radii,
        }),
        tables: vec![("defects.csv".into(), table)],
    })
}

fn iterate(c: &Iterate) -> Result<Outcome, RunError> {
    let half = DomainSpec { dim: 1, graph: GraphSpec::Flat, center: vec![0.0], radius: 1.0, t_start: -1.0, t_end: 0.0 };
    let dom = half.build().map_err(numerical("domain"))?;
    let u = GridField::from_fn(&dom, c.grid.grid(), |x, _| x[0]).map_err(numerical("sample u"))?;
    let v =
        GridField::from_fn(&dom, c.grid.grid(), |x, t| x[0].powi(3) + 6.0 * x[0] * t).map_err(numerical("sample v"))?;
    let setup = IterationSetup {
        center: Center::new(vec![0.0], 0.0),
        k: c.k,
        alpha: c.alpha,
        rho: c.rho,
        r0: c.r0,
        steps: c.steps,
        source: build_source_map(&UModel::flat(1), c.k).map_err(numerical("source map"))?,
        d: ParPoly::zero(1),
    };
    let trace = if c.normalize { ds_iteration_normalized(&u, &v, &setup) } else { ds_iteration(&u, &v, &setup) }
        .map_err(numerical("iteration"))?;
    let target = &(&ParPoly::var(1, 0) * &ParPoly::var(1, 0)) + &ParPoly::time(1).scale(&rat(6, 1));
    let polys = trace.unscaled_polys();
    let target = target.to_float();
    let errors: Vec<f64> = polys
        .iter()
        .map(|p| {
            p.terms().chain(target.terms()).map(|(m, _)| (p.coeff(m) - target.coeff(m)).abs()).fold(0.0f64, f64::max)
        })
        .collect();
    let mut table = Vec::new();
    trace.write_csv(&mut table).map_err(numerical("csv"))?;
    Ok(Outcome {
        result: json!({
            "v_scale": trace.v_scale,
            "residuals": trace.steps.iter().map(|s| s.residual).collect::<Vec<_>>(),
            "contraction_ratios": trace.contraction_ratios(),
            "contraction_bound": c.rho.powf(c.k as f64 + 1.0 + c.alpha),
            "coefficient_errors": errors,
            "polynomials": polys,
            "truncated": trace.truncated,
        }),
        tables: vec![("iteration.csv".into(), table)],
    })
}

fn counterexample(c: &Counterexample) -> Result<Outcome, RunError> {
    let mut exp = BlowupExperiment::new(c.dim, c.alpha, c.beta, c.variant);
    exp.probe = c.probe.clone();
    exp.cutoff_width = c.cutoff_width;
    exp.times = (c.j_min..=c.j_max).map(|j| 0.5f64.powi(j)).collect();
    let grid = BlowupGrid { h: c.grid.h, tau: c.grid.tau, rannacher_steps: c.rannacher_steps };
    let res = run_blowup(&exp, grid).map_err(numerical("blow-up experiment"))?;
    let mut table = Vec::new();
    res.write_csv(&mut table).map_err(numerical("csv"))?;
    let target = -(c.alpha - c.beta);
    Ok(Outcome {
        result: json!({
            "probe": res.probe,
            "fitted_exponent": res.fitted_exponent,
            "fitted_stderr": res.fitted_stderr,
            "reference_exponent": target,
            "monotone": res.monotone,
        }),
        tables: vec![("ratios.csv".into(), table)],
    })
}

fn scaling(c: &ScalingCheck) -> Result<Outcome, RunError> {
    let dom = c.domain.build().map_err(numerical("domain"))?;
    let data = c.data.function(&c.domain);
    let t0 = dom.t_start();
    let u = solve_heat(&dom, &|x| data(x, t0), Some(&data), None, c.grid.grid(), &SolveOptions::default())
        .map_err(numerical("heat solve"))?;
    let center = Center::new(c.center.x.clone(), c.center.t);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &r0 in &c.r0 {
        let s =
            scaling_seminorm_check(&u, &center, r0, c.alpha, c.rho, c.margin).map_err(numerical("scaling check"))?;
        rows.push(format!(
            "{r0:e},{:e},{:e},{},{:e}",
            s.rescaled,
            s.original,
            s.ratio.map_or(String::new(), |v| format!("{v:e}")),
            s.expected
        ));
        checks
            .push(json!({ "r0": r0, "ratio": s.ratio, "expected": s.expected, "relative_error": s.relative_error() }));
    }
    Ok(Outcome {
        result: json!({ "alpha": c.alpha, "checks": checks }),
        tables: vec![("scaling.csv".into(), csv_text("r0,rescaled,original,ratio,expected", rows))],
    })
}

fn obstacle(c: &ObstacleDemo) -> Result<Outcome, RunError> {
    let case = match c.case {
        ObstacleCase::Flat => ManufacturedCase::flat(),
        ObstacleCase::Sine { amplitude } => ManufacturedCase::sine(amplitude),
    };
    let demo = pbh_core::ObstacleDemo {
        h_values: c.h_values.clone(),
        x1_range: (c.x1_range[0], c.x1_range[1]),
        t: c.t,
        ..Default::default()
    };
    let r = obstacle_demo(&case, &demo).map_err(numerical("obstacle demo"))?;
    let mut table = Vec::new();
    r.write_csv(&mut table).map_err(numerical("csv"))?;
    Ok(Outcome {
        result: json!({
            "case": r.case,
            "order_grad": finite(r.order_grad),
            "order_dt": finite(r.order_dt),
            "order_f": finite(r.order_f),
            "observed_order": r.observed_order(),
            "levels": r.levels,
        }),
        tables: vec![("errors.csv".into(), table)],
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
