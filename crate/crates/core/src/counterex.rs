//! Quotients of caloric functions that blow up at the base of a cylinder.
//!
//! With zero initial data and lateral data `t^α` (for `u`) and `t^β` (for
//! `v`), `β < α`, the quotient `v/u` is bounded below by `t^{−(α−β)}`
//! everywhere, so it cannot stay bounded as `t → 0⁺`. Multiplying the data by
//! a cutoff `φ` that vanishes near a boundary point `x₀` gives the same
//! behavior next to the corner `(x₀, 0)`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::heatlab::{solve_heat, GraphDomain, Grid, HeatError, ScalarFn, SolveOptions, TimeScheme};
use crate::regularity::loglog_slope;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CounterexError {
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("probe time {t} is not resolved (needs t >= 2 tau = {min} and a stored level)")]
    Unresolved { t: f64, min: f64 },
    #[error("u = {u:e} at the probe at t = {t} is below the positivity floor")]
    Positivity { t: f64, u: f64 },
    #[error("kernel series or quadrature did not reach the requested tolerance ({0:e})")]
    Oracle(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Data on the whole lateral boundary.
    Base,
    /// Data multiplied by a cutoff vanishing near `x₀ = −e₁`.
    Corner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProbePath {
    /// Fixed point at this distance from `+e₁`, where the data is switched on.
    BoundaryOffset {
        distance: f64,
    },
    /// Center of the ball.
    Center,
    Fixed {
        x: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupExperiment {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub variant: Variant,
    pub probe: ProbePath,
    /// Probe times, decreasing.
    pub times: Vec<f64>,
    /// Angular width of the arc around `x₀` where the cutoff vanishes.
    pub cutoff_width: f64,
}

impl BlowupExperiment {
    /// Defaults: probe at distance 1/32 from the active boundary point,
    /// `t_j = 2^{−j}`, `j = 3..10`.
    pub fn new(dim: usize, alpha: f64, beta: f64, variant: Variant) -> Self {
        Self {
            dim,
            alpha,
            beta,
            variant,
            probe: ProbePath::BoundaryOffset { distance: 1.0 / 32.0 },
            times: (3..=10).map(|j| 0.5f64.powi(j)).collect(),
            cutoff_width: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), CounterexError> {
        let bad = |m: String| Err(CounterexError::Invalid(m));
        if !(1..=2).contains(&self.dim) {
            return bad(format!("dimension {}", self.dim));
        }
        if !(self.beta > 0.0 && self.beta <= self.alpha && self.alpha <= 1.0) {
            return bad(format!("need 0 < beta <= alpha <= 1, got alpha = {}, beta = {}", self.alpha, self.beta));
        }
        if self.times.is_empty()
            || self.times.windows(2).any(|w| w[1] >= w[0])
            || self.times[self.times.len() - 1] <= 0.0
        {
            return bad("probe times must be positive and strictly decreasing".into());
        }
        if !(self.cutoff_width > 0.0 && self.cutoff_width < PI) {
            return bad("cutoff width must lie in (0, pi)".into());
        }
        let p = self.probe_point();
        if p.len() != self.dim || p.iter().map(|v| v * v).sum::<f64>() >= 1.0 {
            return bad(format!("probe {p:?} is not inside the unit ball"));
        }
        Ok(())
    }

    pub fn probe_point(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        match &self.probe {
            ProbePath::BoundaryOffset { distance } => p[0] = 1.0 - distance,
            ProbePath::Center => {}
            ProbePath::Fixed { x } => p = x.clone(),
        }
        p
    }

    /// Raised-cosine cutoff on the sphere: zero on the arc of width
    /// `cutoff_width` around `−e₁`, one on the opposite half, smooth between.
    pub fn cutoff(&self, x: &[f64]) -> f64 {
        if self.variant == Variant::Base {
            return 1.0;
        }
        let angle = if self.dim == 1 {
            if x[0] < 0.0 {
                0.0
            } else {
                PI
            }
        } else {
            // angle measured from −e₁
            (-x[1]).atan2(-x[0]).abs()
        };
        let a0 = 0.5 * self.cutoff_width;
        let a1 = 0.5 * PI;
        if angle <= a0 {
            0.0
        } else if angle >= a1 {
            1.0
        } else {
            0.5 - 0.5 * (PI * (angle - a0) / (a1 - a0)).cos()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupGrid {
    pub h: f64,
    pub tau: f64,
    /// Leading steps done with backward Euler to damp the start-up kink.
    pub rannacher_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupSample {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub ratio: f64,
    pub oracle: Option<OracleBracket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupResult {
    pub probe: Vec<f64>,
    pub samples: Vec<BlowupSample>,
    /// Slope of `log ratio` against `log t`.
    pub fitted_exponent: f64,
    pub fitted_stderr: f64,
    /// Ratios increase as `t` decreases.
    pub monotone: bool,
}

impl BlowupResult {
    /// `t_j, ratio_j, oracle_lo, oracle_hi` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "ratio", "oracle_lo", "oracle_hi"])?;
        for s in &self.samples {
            let (lo, hi) = s
                .oracle
                .as_ref()
                .map_or((String::new(), String::new()), |o| (format!("{:e}", o.ratio_lo), format!("{:e}", o.ratio_hi)));
            w.write_record([format!("{:e}", s.t), format!("{:e}", s.ratio), lo, hi])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves for `u` and `v` on `B₁ × (0, T]`, `T` the largest probe time, and
/// samples `v/u` at the probe. In one dimension every sample also carries
/// the kernel-quadrature bracket.
pub fn run_blowup(exp: &BlowupExperiment, grid: BlowupGrid) -> Result<BlowupResult, CounterexError> {
    exp.validate()?;
    let t_end = exp.times[0];
    let min_t = 2.0 * grid.tau;
    if let Some(&t) = exp.times.iter().find(|&&t| t < min_t) {
        return Err(CounterexError::Unresolved { t, min: min_t });
    }
    let domain = GraphDomain::new(exp.dim, None, vec![0.0; exp.dim], 1.0, 0.0, t_end)?;
    let data = |power: f64| -> ScalarFn {
        let e = exp.clone();
        Arc::new(move |x: &[f64], t: f64| e.cutoff(x) * t.max(0.0).powf(power))
    };
    let (gu, gv) = (data(exp.alpha), data(exp.beta));
    let options = SolveOptions {
        scheme: TimeScheme::CrankNicolson,
        rannacher_steps: grid.rannacher_steps,
        max_tau_over_h: f64::INFINITY,
        ..SolveOptions::default()
    };
    let g = Grid { h: grid.h, tau: grid.tau };
    let u = solve_heat(&domain, &|_| 0.0, Some(&gu), None, g, &options)?;
    let v =
        if exp.alpha == exp.beta { u.clone() } else { solve_heat(&domain, &|_| 0.0, Some(&gv), None, g, &options)? };

    let probe = exp.probe_point();
    let mut samples = Vec::with_capacity(exp.times.len());
    for &t in &exp.times {
        if u.level_at(t).is_none() {
            return Err(CounterexError::Unresolved { t, min: min_t });
        }
        let uu = u.sample(&probe, t).ok_or(CounterexError::Unresolved { t, min: min_t })?;
        let vv = v.sample(&probe, t).ok_or(CounterexError::Unresolved { t, min: min_t })?;
        if !(uu > 1e-300) {
            return Err(CounterexError::Positivity { t, u: uu });
        }
        let oracle = if exp.dim == 1 { Some(kernel_quadrature_oracle(exp, probe[0], t)?) } else { None };
        samples.push(BlowupSample { t, u: uu, v: vv, ratio: vv / uu, oracle });
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let rs: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let (fitted_exponent, fitted_stderr) =
        if samples.len() >= 2 { loglog_slope(&ts, &rs) } else { (f64::NAN, f64::NAN) };
    let monotone = rs.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    Ok(BlowupResult { probe, samples, fitted_exponent, fitted_stderr, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBracket {
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

/// Half-line kernel `x/(2√π τ^{3/2}) e^{−x²/4τ}`.
fn half_line_kernel(x: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    x / (2.0 * PI.sqrt() * tau.powf(1.5)) * (-x * x / (4.0 * tau)).exp()
}

/// Kernel of the interval `(−1, 1)` for data at an endpoint, as a function of
/// the distance `y` to that endpoint: `Σ_{m≥0} k(y + 4m) − k(4(m+1) − y)`.
/// Returns the sum and a bound on the omitted tail.
fn interval_kernel(y: f64, tau: f64, terms: usize) -> (f64, f64) {
    let len = 2.0;
    let mut sum = 0.0;
    for m in 0..terms {
        let mm = m as f64;
        sum += half_line_kernel(y + 2.0 * mm * len, tau) - half_line_kernel(2.0 * (mm + 1.0) * len - y, tau);
    }
    // the omitted terms decay faster than geometrically; twice the first
    // one bounds them
    let mm = terms as f64;
    let tail = 2.0
        * (half_line_kernel(y + 2.0 * mm * len, tau).abs() + half_line_kernel(2.0 * (mm + 1.0) * len - y, tau).abs());
    (sum, tail)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Gauss–Kronrod 7/15 on one interval: value and `|K15 − G7|`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = hw * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * hw, ((k - g) * hw).abs())
}

/// Globally adaptive Gauss–Kronrod: bisects the interval with the largest
/// error estimate until the summed estimate drops below `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_intervals: usize) -> Option<(f64, f64)> {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    loop {
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= tol {
            return Some((parts.iter().map(|p| p.2 .0).sum(), err));
        }
        if parts.len() >= max_intervals {
            return None;
        }
        let (i, _) = parts.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)).unwrap();
        let (lo, hi, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
}

/// `∫_0^t K(y, t − s) s^p ds` with `s = t·w²`, plus an error bound.
fn boundary_integral(y: f64, t: f64, p: f64) -> Result<(f64, f64), CounterexError> {
    let terms = 8;
    let integrand = |w: f64| {
        let s = t * w * w;
        interval_kernel(y, t - s, terms).0 * s.powf(p) * 2.0 * t * w
    };
    // the tail bound of the series is increasing in τ, so its value at τ = t
    // bounds it over the whole integral
    let tail = interval_kernel(y, t, terms).1 * t.powf(p) * t;
    // a loose pass fixes the magnitude, the second pass is relative to it
    let loose = 1e-6 * t.powf(p);
    let (estimate, _) = integrate(&integrand, 0.0, 1.0, loose, 4000).ok_or(CounterexError::Oracle(loose))?;
    let tol = (1e-11 * estimate.abs()).max(1e-300);
    let (val, err) = integrate(&integrand, 0.0, 1.0, tol, 8000).ok_or(CounterexError::Oracle(tol))?;
    let bound = err + tail;
    Ok((val, bound))
}

/// Brackets `v/u` at `(x, t)` in one dimension from the image series of the
/// interval kernel and adaptive quadrature in time.
pub fn kernel_quadrature_oracle(exp: &BlowupExperiment, x: f64, t: f64) -> Result<OracleBracket, CounterexError> {
    if exp.dim != 1 {
        return Err(CounterexError::Invalid("the quadrature oracle is one-dimensional".into()));
    }
    if !(x > -1.0 && x < 1.0 && t > 0.0) {
        return Err(CounterexError::Invalid(format!("(x, t) = ({x}, {t}) outside the cylinder")));
    }
    let mut u = (0.0, 0.0);
    let mut v = (0.0, 0.0);
    for end in [-1.0f64, 1.0] {
        let w = exp.cutoff(&[end]);
        if w == 0.0 {
            continue;
        }
        let y = (end - x).abs();
        let (a, ea) = boundary_integral(y, t, exp.alpha)?;
        let (b, eb) = boundary_integral(y, t, exp.beta)?;
        u = (u.0 + w * a, u.1 + w * ea);
        v = (v.0 + w * b, v.1 + w * eb);
    }
    for (val, err) in [u, v] {
        if err > 1e-3 * val.abs() {
            return Err(CounterexError::Oracle(err / val.abs()));
        }
    }
    let u_b = (u.0 - u.1, u.0 + u.1);
    let v_b = (v.0 - v.1, v.0 + v.1);
    if !(u_b.0 > 0.0) {
        return Err(CounterexError::Positivity { t, u: u.0 });
    }
    Ok(OracleBracket { u: u_b, v: v_b, ratio_lo: v_b.0 / u_b.1, ratio_hi: v_b.1 / u_b.0 })
}
