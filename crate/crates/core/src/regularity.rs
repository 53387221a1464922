//! Quotients `v/u`, local parabolic-polynomial fits and the flatness
//! iteration run on sampled fields.
//!
//! All fits are centered: a polynomial `P` fitted at `(x₀, t₀)` is a
//! polynomial in `(x − x₀, t − t₀)`. The cylinder `Q_r(x₀, t₀)` is
//! `B_r(x₀) × (t₀ − r², t₀]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approx::{free_part, solve_approximating, ApproxError, SourceMap};
use crate::heatlab::{GridField, HeatError};
use crate::parpoly::{rat_from_f64, rat_to_f64, FloatPoly, ParIndex, ParPoly};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegularityError {
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("denominator u = {value:e} <= 0 at x = {x:?}, t = {t}")]
    NonPositiveDenominator { x: Vec<f64>, t: f64, value: f64 },
    #[error("fit needs at least {needed} nodes, found {found}")]
    InsufficientNodes { needed: usize, found: usize },
    #[error("normal equations are rank deficient (condition estimate {0:.3e})")]
    RankDeficient(f64),
    #[error("radius {r} is below the resolution floor {floor}")]
    BelowFloor { r: f64, floor: f64 },
    #[error("only {0} radii carry a defect above the floor; at least 3 are needed")]
    TooFewRadii(usize),
    #[error("hypothesis fails at r0: residual {residual:e} > {bound:e}; scale v by at most {required_scale:e}")]
    Hypothesis { residual: f64, bound: f64, required_scale: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub x: Vec<f64>,
    pub t: f64,
}

impl Center {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    fn in_cylinder(&self, x: &[f64], t: f64, r: f64) -> bool {
        let d2: f64 = x.iter().zip(&self.x).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 < r * r && t <= self.t + 1e-12 && t > self.t - r * r - 1e-12
    }
}

/// `v/u` at nodes at distance at least `margin·h` from the boundary;
/// nodes closer than that are dropped.
pub fn quotient_field(u: &GridField, v: &GridField, margin: f64) -> Result<GridField, RegularityError> {
    let dom = u.domain().clone();
    let n = u.dim();
    let cut = margin * u.grid().h;
    let mut bad = None;
    let q = u.zip_with(v, |a, b, x, t| {
        if dom.boundary_distance(&x[..n], t) < cut {
            return None;
        }
        if a <= 0.0 && bad.is_none() {
            bad = Some(RegularityError::NonPositiveDenominator { x: x[..n].to_vec(), t, value: a });
        }
        Some(b / a)
    })?;
    match bad {
        Some(e) => Err(e),
        None => Ok(q),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// Polynomial in `(x − x₀, t − t₀)`.
    pub poly: FloatPoly,
    /// `max |field − P|` over the fitted nodes.
    pub defect: f64,
    pub nodes: usize,
    /// `max |field|` over the fitted nodes.
    pub scale: f64,
}

/// Least squares for `Σ_j c_j φ_j ≈ y` through the normal equations, with
/// two rounds of residual correction.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, RegularityError> {
    let m = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    let eig = ata.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    if !(lo > hi * 1e-24) {
        return Err(RegularityError::RankDeficient(hi / lo.max(f64::MIN_POSITIVE)));
    }
    let chol = ata.cholesky().ok_or(RegularityError::RankDeficient(hi / lo))?;
    let mut c = chol.solve(&(a.transpose() * &b));
    for _ in 0..2 {
        let r = &b - &a * &c;
        c += chol.solve(&(a.transpose() * r));
    }
    Ok(c.iter().copied().collect())
}

struct Sample {
    dx: Vec<f64>,
    dt: f64,
    value: f64,
}

fn collect(field: &GridField, center: &Center, r: f64) -> Vec<Sample> {
    let n = field.dim();
    let mut out = Vec::new();
    for j in 0..field.n_levels() {
        let t = field.time(j);
        if t > center.t + 1e-12 || t <= center.t - r * r - 1e-12 {
            continue;
        }
        for (_, x, v) in field.active(j) {
            if center.in_cylinder(&x[..n], t, r) {
                out.push(Sample { dx: (0..n).map(|a| x[a] - center.x[a]).collect(), dt: t - center.t, value: v });
            }
        }
    }
    out
}

/// Least-squares parabolic polynomial of degree `k` on `Q_r(center)` with
/// columns scaled by `r^{wdeg}`; the defect is measured in sup norm.
pub fn fit_parpoly(field: &GridField, center: &Center, k: u32, r: f64) -> Result<Fit, RegularityError> {
    let n = field.dim();
    if center.x.len() != n {
        return Err(RegularityError::InvalidParameter(format!("center has {} coordinates", center.x.len())));
    }
    let basis = ParIndex::enumerate(n, k);
    let samples = collect(field, center, r);
    let needed = 3 * basis.len();
    if samples.len() < needed {
        return Err(RegularityError::InsufficientNodes { needed, found: samples.len() });
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let y: Vec<f64> = s.dx.iter().map(|d| d / r).collect();
            basis.iter().map(|m| m.eval_f64(&y, s.dt / (r * r))).collect()
        })
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let c = least_squares(&rows, &y)?;
    let mut defect: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (row, s) in rows.iter().zip(&samples) {
        let p: f64 = row.iter().zip(&c).map(|(a, b)| a * b).sum();
        defect = defect.max((s.value - p).abs());
        scale = scale.max(s.value.abs());
    }
    let poly = FloatPoly::from_terms(n, basis.iter().zip(&c).map(|(m, &ci)| (m.clone(), ci / r.powi(m.wdeg() as i32))));
    Ok(Fit { poly, defect, nodes: samples.len(), scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentStatus {
    /// Slope over radii with defects above the floor.
    Measured,
    /// Some defects hit the floor; the slope is a lower bound.
    AtLeast,
    /// Every defect sits at the floor: polynomial fixed point.
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub center: Center,
    pub k: u32,
    pub radii: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<FloatPoly>,
    pub nodes: Vec<usize>,
    pub exponent: Option<f64>,
    pub exponent_stderr: Option<f64>,
    pub status: ExponentStatus,
    /// Defects at or below this count as machine floor.
    pub floor: f64,
}

impl HolderReport {
    /// `r_j, defect_j` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "defect", "nodes"])?;
        for ((r, d), n) in self.radii.iter().zip(&self.residuals).zip(&self.nodes) {
            w.write_record([format!("{r:e}"), format!("{d:e}"), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest defect relative to the field scale.
    pub fn max_relative_defect(&self, scale: f64) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, d| m.max(*d)) / scale.max(f64::MIN_POSITIVE)
    }
}

/// Least-squares slope and its standard error.
pub fn loglog_slope(r: &[f64], d: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let stderr = if xs.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, stderr)
}

/// Fits at every radius and regresses `log defect` on `log r`.
pub fn holder_exponent(
    field: &GridField,
    center: &Center,
    k: u32,
    radii: &[f64],
) -> Result<HolderReport, RegularityError> {
    let floor_r = 4.0 * field.grid().h;
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RegularityError::InvalidParameter("radii must be strictly decreasing".into()));
    }
    if let Some(&r) = radii.iter().find(|&&r| r < floor_r) {
        return Err(RegularityError::BelowFloor { r, floor: floor_r });
    }
    let mut fits = Vec::with_capacity(radii.len());
    for &r in radii {
        fits.push(fit_parpoly(field, center, k, r)?);
    }
    let scale = fits.iter().fold(0.0f64, |m, f| m.max(f.scale));
    let floor = 10.0 * f64::EPSILON * scale;
    let usable: Vec<usize> = (0..fits.len()).filter(|&i| fits[i].defect > floor).collect();
    let floored = fits.len() - usable.len();
    let (exponent, stderr, status) = if usable.len() >= 3 {
        let r: Vec<f64> = usable.iter().map(|&i| radii[i]).collect();
        let d: Vec<f64> = usable.iter().map(|&i| fits[i].defect).collect();
        let (s, e) = loglog_slope(&r, &d);
        let status = if floored > 0 { ExponentStatus::AtLeast } else { ExponentStatus::Measured };
        (Some(s), Some(e), status)
    } else if floored > 0 && usable.is_empty() {
        (None, None, ExponentStatus::Capped)
    } else if floored > 0 && usable.len() == 2 {
        let r: Vec<f64> = usable.iter().map(|&i| radii[i]).collect();
        let d: Vec<f64> = usable.iter().map(|&i| fits[i].defect).collect();
        (Some(loglog_slope(&r, &d).0), None, ExponentStatus::AtLeast)
    } else if floored > 0 {
        (None, None, ExponentStatus::Capped)
    } else {
        return Err(RegularityError::TooFewRadii(usable.len()));
    };
    Ok(HolderReport {
        center: center.clone(),
        k,
        radii: radii.to_vec(),
        residuals: fits.iter().map(|f| f.defect).collect(),
        nodes: fits.iter().map(|f| f.nodes).collect(),
        fitted: fits.into_iter().map(|f| f.poly).collect(),
        exponent,
        exponent_stderr: stderr,
        status,
        floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub r: f64,
    /// Exact approximating polynomial in `(x − x₀, t − t₀)`.
    pub poly: ParPoly,
    /// `sup |v − uP|` over `Q_r`.
    pub residual: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub k: u32,
    pub alpha: f64,
    pub rho: f64,
    pub r0: f64,
    pub steps: Vec<IterationStep>,
    /// Stopped early at the resolution floor.
    pub truncated: bool,
    /// Factor applied to `v` before iterating (1 unless normalized).
    pub v_scale: f64,
    /// Residuals at or below this are machine floor.
    pub floor: f64,
}

impl IterationTrace {
    /// `residual_{i+1}/residual_i` over consecutive steps whose earlier
    /// residual is above the floor.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.steps.windows(2).filter(|w| w[0].residual > self.floor).map(|w| w[1].residual / w[0].residual).collect()
    }

    /// Approximating polynomials for the unscaled `v`.
    pub fn unscaled_polys(&self) -> Vec<FloatPoly> {
        self.steps
            .iter()
            .map(|s| {
                let f = s.poly.to_float();
                FloatPoly::from_terms(f.dim(), f.terms().map(|(k, v)| (k.clone(), v / self.v_scale)))
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "r", "residual", "nodes"])?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([i.to_string(), format!("{:e}", s.r), format!("{:e}", s.residual), s.nodes.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parameters of the flatness iteration. `source` and `d` define the
/// approximating space (`d = 0` for the heat equation, the Taylor
/// polynomial of `g` otherwise), in coordinates centered at `center`.
#[derive(Debug, Clone)]
pub struct IterationSetup {
    pub center: Center,
    pub k: u32,
    pub alpha: f64,
    pub rho: f64,
    pub r0: f64,
    pub steps: usize,
    pub source: SourceMap,
    pub d: ParPoly,
}

impl IterationSetup {
    fn validate(&self) -> Result<(), RegularityError> {
        let bad = |m: &str| Err(RegularityError::InvalidParameter(m.into()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.r0 > 0.0) {
            return bad("r0 must be positive");
        }
        if self.source.order() != self.k {
            return bad("source map order differs from k");
        }
        Ok(())
    }
}

fn sup_defect(u: &GridField, v: &GridField, p: &FloatPoly, center: &Center, r: f64) -> (f64, usize) {
    let n = u.dim();
    let mut sup: f64 = 0.0;
    let mut count = 0;
    for j in 0..u.n_levels() {
        let t = u.time(j);
        if t > center.t + 1e-12 || t <= center.t - r * r - 1e-12 {
            continue;
        }
        for (i, x, a) in u.active(j) {
            if !center.in_cylinder(&x[..n], t, r) {
                continue;
            }
            let Some(b) = v.at(j, &i[..n]) else { continue };
            let dx: Vec<f64> = (0..n).map(|q| x[q] - center.x[q]).collect();
            sup = sup.max((b - a * p.eval(&dx, t - center.t)).abs());
            count += 1;
        }
    }
    (sup, count)
}

/// Runs the improvement-of-flatness iteration: at each radius
/// `r_i = r0·ρ^i`, fits `ṽ = (v − uP_i)/r_i^{k+1+α}` by `ũ·Q` in rescaled
/// variables (`ũ = u/r_i`), keeps the free part of `Q`, re-solves the rescaled
/// approximating system with zero source, and sets
/// `P_{i+1} = P_i + r_i^{k+α} Q̃(x/r_i, t/r_i²)`.
pub fn ds_iteration(u: &GridField, v: &GridField, setup: &IterationSetup) -> Result<IterationTrace, RegularityError> {
    run_iteration(u, v, setup, 1.0)
}

/// Same as [`ds_iteration`] after scaling `v` so that the hypothesis holds at
/// `r0` with half the allowed residual.
pub fn ds_iteration_normalized(
    u: &GridField,
    v: &GridField,
    setup: &IterationSetup,
) -> Result<IterationTrace, RegularityError> {
    setup.validate()?;
    let p0 = solve_approximating(&setup.source, &setup.d, &Default::default(), setup.k)?;
    let (res0, _) = sup_defect(u, v, &p0.to_float(), &setup.center, setup.r0);
    let bound = setup.r0.powf(setup.k as f64 + 1.0 + setup.alpha);
    let scale = if res0 > 0.5 * bound { 0.5 * bound / res0 } else { 1.0 };
    if scale == 1.0 {
        return run_iteration(u, v, setup, 1.0);
    }
    // the source d scales with v
    let mut scaled = setup.clone();
    scaled.d = setup.d.scale(&rat_from_f64(scale).unwrap());
    let vs = v.map(|w| w * scale);
    run_iteration(u, &vs, &scaled, scale)
}

fn run_iteration(
    u: &GridField,
    v: &GridField,
    setup: &IterationSetup,
    v_scale: f64,
) -> Result<IterationTrace, RegularityError> {
    setup.validate()?;
    if !u.same_grid(v) {
        return Err(HeatError::GridMismatch.into());
    }
    let n = u.dim();
    let k = setup.k;
    let kf = k as f64;
    let basis = ParIndex::enumerate(n, k);
    let floor_r = 4.0 * u.grid().h;
    let center = &setup.center;

    let mut p = solve_approximating(&setup.source, &setup.d, &Default::default(), k)?;
    let (res0, _) = sup_defect(u, v, &p.to_float(), center, setup.r0);
    let bound = setup.r0.powf(kf + 1.0 + setup.alpha);
    if res0 > bound {
        return Err(RegularityError::Hypothesis { residual: res0, bound, required_scale: bound / res0 });
    }
    let scale = v.sup_norm().max(u.sup_norm());
    let floor = 10.0 * f64::EPSILON * scale;

    let rho = rat_from_f64(setup.rho).unwrap();
    let mut r_exact = rat_from_f64(setup.r0).unwrap();
    let mut steps = Vec::new();
    let mut truncated = false;
    for i in 0..setup.steps {
        let r = rat_to_f64(&r_exact);
        if r < floor_r {
            truncated = true;
            break;
        }
        let pf = p.to_float();
        let (residual, nodes) = sup_defect(u, v, &pf, center, r);
        steps.push(IterationStep { r, poly: p.clone(), residual, nodes });
        if i + 1 == setup.steps {
            break;
        }

        // fit ṽ ≈ ũ·Q on the rescaled cylinder
        let scale_v = r.powf(kf + 1.0 + setup.alpha);
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for j in 0..u.n_levels() {
            let t = u.time(j);
            if t > center.t + 1e-12 || t <= center.t - r * r - 1e-12 {
                continue;
            }
            for (i, x, a) in u.active(j) {
                if !center.in_cylinder(&x[..n], t, r) {
                    continue;
                }
                let Some(b) = v.at(j, &i[..n]) else { continue };
                let y: Vec<f64> = (0..n).map(|q| (x[q] - center.x[q]) / r).collect();
                let s = (t - center.t) / (r * r);
                let ut = a / r;
                rows.push(basis.iter().map(|m| ut * m.eval_f64(&y, s)).collect::<Vec<f64>>());
                let dx: Vec<f64> = (0..n).map(|q| x[q] - center.x[q]).collect();
                rhs.push((b - a * pf.eval(&dx, t - center.t)) / scale_v);
            }
        }
        let needed = 3 * basis.len();
        if rows.len() < needed {
            truncated = true;
            break;
        }
        let c = match least_squares(&rows, &rhs) {
            Ok(c) => c,
            Err(RegularityError::RankDeficient(_)) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let fitted = ParPoly::from_terms(
            n,
            basis.iter().zip(&c).filter_map(|(m, &ci)| rat_from_f64(ci).map(|q| (m.clone(), q))),
        );
        let free = free_part(&fitted);
        let tilde = setup.source.rescaled(&r_exact)?;
        let q = solve_approximating(&tilde, &ParPoly::zero(n), &free, k)?;
        let gain = rat_from_f64(r.powf(kf + setup.alpha)).unwrap();
        let correction = q.rescale(&r_exact).map_err(ApproxError::from)?.scale(&gain);
        p = (&p + &correction).with_cap(k).map_err(ApproxError::from)?;
        r_exact = &r_exact * &rho;
    }
    Ok(IterationTrace { k, alpha: setup.alpha, rho: setup.rho, r0: setup.r0, steps, truncated, v_scale, floor })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub r0: f64,
    pub alpha: f64,
    /// `[D u_{r0}]_α` over the rescaled region.
    pub rescaled: f64,
    /// `[D u]_α` over the dilated region on the original grid.
    pub original: f64,
    /// `rescaled / original`; `None` when both vanish.
    pub ratio: Option<f64>,
    pub expected: f64,
}

impl ScalingCheck {
    pub fn relative_error(&self) -> Option<f64> {
        self.ratio.map(|q| (q / self.expected - 1.0).abs())
    }
}

struct GradSample {
    x: Vec<f64>,
    t: f64,
    grad: Vec<f64>,
}

fn seminorm(samples: &[GradSample], alpha: f64, max_points: usize) -> f64 {
    let stride = samples.len().div_ceil(max_points).max(1);
    let pts: Vec<&GradSample> = samples.iter().step_by(stride).collect();
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let (p, q) = (pts[i], pts[j]);
            let dx: f64 = p.x.iter().zip(&q.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let d = dx + (p.t - q.t).abs().sqrt();
            if d <= 0.0 {
                continue;
            }
            let dg: f64 = p.grad.iter().zip(&q.grad).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            best = best.max(dg / d.powf(alpha));
        }
    }
    best
}

/// Compares the α-Hölder seminorm of `D u_{r0}`, `u_{r0}(y, s) =
/// u(x₀ + r0·y, t₀ + r0²·s)/r0`, over `Q_ρ ∩ G_{r0}` (sampled on a lattice of the
/// original spacing, values interpolated) with `r0^α` times that of `Du` over
/// `Q_{r0ρ}(x₀, t₀)` on the original lattice. Points within `margin·h` of the
/// boundary are skipped on both sides.
pub fn scaling_seminorm_check(
    u: &GridField,
    center: &Center,
    r0: f64,
    alpha: f64,
    rho: f64,
    margin: f64,
) -> Result<ScalingCheck, RegularityError> {
    if !(r0 > 0.0 && r0 < 1.0) || !(alpha > 0.0 && alpha <= 1.0) || !(rho > 0.0) {
        return Err(RegularityError::InvalidParameter("need 0 < r0 < 1, 0 < alpha <= 1, rho > 0".into()));
    }
    let n = u.dim();
    let h = u.grid().h;
    let tau = u.grid().tau;
    let dom = u.domain();
    let max_points = 1500;

    // original lattice
    let mut orig = Vec::new();
    for j in 0..u.n_levels() {
        let t = u.time(j);
        for (i, x, _) in u.active(j) {
            if !center.in_cylinder(&x[..n], t, r0 * rho) || dom.boundary_distance(&x[..n], t) < margin * h {
                continue;
            }
            let mut grad = Vec::with_capacity(n);
            for a in 0..n {
                let mut ip = i;
                let mut im = i;
                ip[a] += 1;
                im[a] -= 1;
                match (u.at(j, &ip[..n]), u.at(j, &im[..n])) {
                    (Some(p), Some(m)) => grad.push((p - m) / (2.0 * h)),
                    _ => break,
                }
            }
            if grad.len() == n {
                orig.push(GradSample { x: x[..n].to_vec(), t, grad });
            }
        }
    }

    // rescaled lattice: y = i·h, s = −j·τ
    let mut resc = Vec::new();
    let reach = (rho / h).ceil() as i64;
    let levels = (rho * rho / tau).floor() as i64;
    for j in 0..=levels {
        let s = -(j as f64) * tau;
        if s <= -rho * rho {
            continue;
        }
        let t = center.t + r0 * r0 * s;
        let ranges: Vec<i64> = (-reach..=reach).collect();
        let mut idx = vec![0i64; n];
        let total = ranges.len().pow(n as u32);
        for flat in 0..total {
            let mut rem = flat;
            for slot in idx.iter_mut() {
                *slot = ranges[rem % ranges.len()];
                rem /= ranges.len();
            }
            let y: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
            if y.iter().map(|v| v * v).sum::<f64>().sqrt() >= rho {
                continue;
            }
            let x: Vec<f64> = (0..n).map(|a| center.x[a] + r0 * y[a]).collect();
            if dom.boundary_distance(&x, t) < margin * h {
                continue;
            }
            let mut grad = Vec::with_capacity(n);
            for a in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += r0 * h;
                xm[a] -= r0 * h;
                match (u.sample(&xp, t), u.sample(&xm, t)) {
                    (Some(p), Some(m)) => grad.push((p - m) / r0 / (2.0 * h)),
                    _ => break,
                }
            }
            if grad.len() == n {
                resc.push(GradSample { x: y, t: s, grad });
            }
        }
    }
    if orig.len() < 2 || resc.len() < 2 {
        return Err(RegularityError::InsufficientNodes { needed: 2, found: orig.len().min(resc.len()) });
    }
    let rescaled = seminorm(&resc, alpha, max_points);
    let original = seminorm(&orig, alpha, max_points);
    let expected = r0.powf(alpha);
    let tiny = 1e-12 * orig.iter().flat_map(|g| g.grad.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let ratio = if rescaled <= tiny && original <= tiny { None } else { Some(rescaled / original) };
    Ok(ScalingCheck { r0, alpha, rescaled, original, ratio, expected })
}

/// Coefficient-wise distance between an exact polynomial and a target.
pub fn coefficient_error(p: &ParPoly, target: &ParPoly) -> f64 {
    let diff = p - target;
    if diff.is_zero() {
        return 0.0;
    }
    rat_to_f64(&diff.norm())
}
