//! Free-boundary derivatives from derivative quotients.
//!
//! If `u > 0` above the graph `x_n = f(x', t)`, vanishes on it and has
//! `D_n u > 0` there, then differentiating `u(x', f(x', t), t) = 0` gives
//! `D_i f = −D_i u / D_n u` and `∂_t f = −∂_t u / D_n u` on the graph. The
//! demo evaluates these quotients with central differences at two offsets
//! above the graph, extrapolates to the graph, and integrates the recovered
//! slope back to `f`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::regularity::loglog_slope;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObstacleError {
    #[error("D_n u = {value:e} at x1 = {x1}, t = {t} is below the positivity floor {floor:e}")]
    Positivity { x1: f64, t: f64, value: f64, floor: f64 },
    #[error("invalid demo parameters: {0}")]
    Invalid(String),
}

type Surface = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Field = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Closed-form data in two space dimensions: `u(x1, x2, t)` and the graph
/// `f(x1, t)` with its derivatives.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub u: Field,
    pub f: Surface,
    pub f_x1: Surface,
    pub f_t: Surface,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("ManufacturedCase").field("name", &self.name).finish_non_exhaustive()
    }
}

impl ManufacturedCase {
    /// `f ≡ 0`, `u = x2`.
    pub fn flat() -> Self {
        Self {
            name: "flat".into(),
            u: Arc::new(|_, x2, _| x2),
            f: Arc::new(|_, _| 0.0),
            f_x1: Arc::new(|_, _| 0.0),
            f_t: Arc::new(|_, _| 0.0),
        }
    }

    /// `f = a sin(x1 + t)`, `u = (x2 − f)(1 + 0.1 x1)`.
    pub fn sine(amplitude: f64) -> Self {
        let a = amplitude;
        Self {
            name: "sine".into(),
            u: Arc::new(move |x1, x2, t| (x2 - a * (x1 + t).sin()) * (1.0 + 0.1 * x1)),
            f: Arc::new(move |x1, t| a * (x1 + t).sin()),
            f_x1: Arc::new(move |x1, t| a * (x1 + t).cos()),
            f_t: Arc::new(move |x1, t| a * (x1 + t).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleDemo {
    /// Step sizes, decreasing. Each is used for space and time differences
    /// and as the spacing of the `x1` lattice.
    pub h_values: Vec<f64>,
    pub x1_range: (f64, f64),
    pub t: f64,
    pub positivity_floor: f64,
}

impl Default for ObstacleDemo {
    fn default() -> Self {
        Self {
            h_values: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            x1_range: (-0.5, 0.5),
            t: 0.3,
            positivity_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleLevel {
    pub h: f64,
    pub nodes: usize,
    pub err_grad: f64,
    pub err_dt: f64,
    /// Error of `f` rebuilt from the recovered slope with the trapezoid rule.
    pub err_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleReport {
    pub case: String,
    pub levels: Vec<ObstacleLevel>,
    /// Least-squares orders of the three errors against `h`.
    pub order_grad: f64,
    pub order_dt: f64,
    pub order_f: f64,
}

impl ObstacleReport {
    /// Smallest of the three observed orders; `None` when every error is at
    /// round-off and no order is defined.
    pub fn observed_order(&self) -> Option<f64> {
        let o = [self.order_grad, self.order_dt, self.order_f];
        let finite: Vec<f64> = o.into_iter().filter(|v| v.is_finite()).collect();
        finite.into_iter().reduce(f64::min)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["h", "nodes", "err_grad", "err_dt", "err_f"])?;
        for l in &self.levels {
            w.write_record([
                format!("{:e}", l.h),
                l.nodes.to_string(),
                format!("{:e}", l.err_grad),
                format!("{:e}", l.err_dt),
                format!("{:e}", l.err_f),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Recovered `(∂_1 f, ∂_t f)` at `(x1, t)` using offsets `h` and `2h`.
fn recover(case: &ManufacturedCase, x1: f64, t: f64, h: f64, floor: f64) -> Result<(f64, f64), ObstacleError> {
    let quotients = |s: f64| -> Result<(f64, f64), ObstacleError> {
        let x2 = (case.f)(x1, t) + s;
        let u = &case.u;
        let d1 = (u(x1 + h, x2, t) - u(x1 - h, x2, t)) / (2.0 * h);
        let dn = (u(x1, x2 + h, t) - u(x1, x2 - h, t)) / (2.0 * h);
        let dt = (u(x1, x2, t + h) - u(x1, x2, t - h)) / (2.0 * h);
        if !(dn > floor) {
            return Err(ObstacleError::Positivity { x1, t, value: dn, floor });
        }
        Ok((-d1 / dn, -dt / dn))
    };
    let (g1, t1) = quotients(h)?;
    let (g2, t2) = quotients(2.0 * h)?;
    Ok((2.0 * g1 - g2, 2.0 * t1 - t2))
}

pub fn obstacle_demo(case: &ManufacturedCase, demo: &ObstacleDemo) -> Result<ObstacleReport, ObstacleError> {
    let (a, b) = demo.x1_range;
    if demo.h_values.len() < 2
        || demo.h_values.windows(2).any(|w| w[1] >= w[0])
        || demo.h_values.iter().any(|&h| !(h > 0.0))
    {
        return Err(ObstacleError::Invalid("need at least two positive, decreasing step sizes".into()));
    }
    if !(b > a) {
        return Err(ObstacleError::Invalid("empty x1 range".into()));
    }
    let mut levels = Vec::with_capacity(demo.h_values.len());
    for &h in &demo.h_values {
        let cells = ((b - a) / h).round() as usize;
        if cells == 0 || ((b - a) / h - cells as f64).abs() > 1e-9 {
            return Err(ObstacleError::Invalid(format!("h = {h} does not divide the x1 range")));
        }
        let xs: Vec<f64> = (0..=cells).map(|i| a + i as f64 * h).collect();
        let mut err_grad = 0.0f64;
        let mut err_dt = 0.0f64;
        let mut err_f = 0.0f64;
        let mut integral = (case.f)(a, demo.t);
        let mut prev: Option<f64> = None;
        for &x1 in &xs {
            let (g, dt) = recover(case, x1, demo.t, h, demo.positivity_floor)?;
            err_grad = err_grad.max((g - (case.f_x1)(x1, demo.t)).abs());
            err_dt = err_dt.max((dt - (case.f_t)(x1, demo.t)).abs());
            if let Some(p) = prev {
                integral += 0.5 * h * (p + g);
            }
            prev = Some(g);
            err_f = err_f.max((integral - (case.f)(x1, demo.t)).abs());
        }
        levels.push(ObstacleLevel { h, nodes: xs.len(), err_grad, err_dt, err_f });
    }
    let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let order = |e: Vec<f64>| -> f64 {
        if e.iter().all(|&v| v <= 1e-13) {
            f64::NAN
        } else {
            loglog_slope(&hs, &e.iter().map(|v| v.max(1e-300)).collect::<Vec<_>>()).0
        }
    };
    Ok(ObstacleReport {
        case: case.name.clone(),
        order_grad: order(levels.iter().map(|l| l.err_grad).collect()),
        order_dt: order(levels.iter().map(|l| l.err_dt).collect()),
        order_f: order(levels.iter().map(|l| l.err_f).collect()),
        levels,
    })
}
