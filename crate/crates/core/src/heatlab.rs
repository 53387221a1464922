//! Finite-difference solvers on space-time graph domains.
//!
//! The domain at time `t` is `{x : x_n > f(x', t)} ∩ B_r(x₀)` for `n ∈ {1, 2}`,
//! discretized on the origin-aligned lattice `x = i·h`. Near the boundary the
//! second differences use Shortley–Weller arms: the distance `θh` from a node
//! to the boundary along each axis, with the Dirichlet value taken at the
//! crossing point. Nodes with an arm shorter than `θ_min·h` are set by linear
//! interpolation along that axis instead of carrying a PDE row, which keeps
//! the stencil weights bounded as the boundary sweeps across the lattice.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// `(x, t) ↦ value`; `x` has `dim` entries.
pub type ScalarFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// `(x', t) ↦ f(x', t)`; `x'` is ignored when `n = 1`.
pub type GraphFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64], f64) -> [[f64; 2]; 2] + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], f64) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeatError {
    #[error("spatial dimension {0} is not supported (1 or 2)")]
    Dimension(usize),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("no active nodes at t = {0}")]
    EmptySlice(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid does not resolve the boundary: h*kappa = {0:.3e}")]
    Unresolved(f64),
    #[error("A is not uniformly elliptic at x = {x:?}, t = {t}")]
    Ellipticity { x: Vec<f64>, t: f64 },
    #[error("linear solve stalled at relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolve { residual: f64, iterations: usize },
    #[error("discrete maximum principle violated by {excess:.3e} (data range [{lo}, {hi}])")]
    MaxPrinciple { excess: f64, lo: f64, hi: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("not enough interior nodes around ({x:?}, t = {t}) for the requested stencil")]
    InsufficientStencil { x: Vec<f64>, t: f64 },
    #[error("{0}")]
    Io(String),
}

/// Regularity class advertised for the boundary graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphRegularity {
    pub k: u32,
    pub alpha: f64,
    pub seminorm: f64,
}

/// `{x_n > f(x', t)} ∩ B_r(x₀)` for `t ∈ [t_start, t_end]`. Without a graph
/// the domain is the ball alone.
#[derive(Clone)]
pub struct GraphDomain {
    dim: usize,
    graph: Option<GraphFn>,
    center: Vec<f64>,
    radius: f64,
    t_start: f64,
    t_end: f64,
    regularity: Option<GraphRegularity>,
    curvature_bound: f64,
}

impl std::fmt::Debug for GraphDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphDomain")
            .field("dim", &self.dim)
            .field("graph", &self.graph.is_some())
            .field("center", &self.center)
            .field("radius", &self.radius)
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .finish()
    }
}

impl GraphDomain {
    pub fn new(
        dim: usize,
        graph: Option<GraphFn>,
        center: Vec<f64>,
        radius: f64,
        t_start: f64,
        t_end: f64,
    ) -> Result<Self, HeatError> {
        if !(1..=2).contains(&dim) {
            return Err(HeatError::Dimension(dim));
        }
        if center.len() != dim {
            return Err(HeatError::InvalidDomain(format!("center has {} entries", center.len())));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(HeatError::InvalidDomain(format!("radius {radius}")));
        }
        if !(t_end > t_start) {
            return Err(HeatError::InvalidDomain(format!("empty time window [{t_start}, {t_end}]")));
        }
        Ok(Self { dim, graph, center, radius, t_start, t_end, regularity: None, curvature_bound: 0.0 })
    }

    /// `Q_r(x₀, t₀) = B_r(x₀) × (t₀ − r², t₀]` cut by the graph.
    pub fn cylinder(
        dim: usize,
        graph: Option<GraphFn>,
        center: Vec<f64>,
        t0: f64,
        radius: f64,
    ) -> Result<Self, HeatError> {
        Self::new(dim, graph, center, radius, t0 - radius * radius, t0)
    }

    pub fn with_regularity(mut self, regularity: GraphRegularity) -> Self {
        self.regularity = Some(regularity);
        self
    }

    /// Bound on the curvature of the graph; grids with `h·κ` above the
    /// configured fraction are rejected.
    pub fn with_curvature_bound(mut self, kappa: f64) -> Self {
        self.curvature_bound = kappa.abs();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn regularity(&self) -> Option<GraphRegularity> {
        self.regularity
    }

    pub fn has_graph(&self) -> bool {
        self.graph.is_some()
    }

    /// `f(x', t)`, or `−∞` without a graph.
    pub fn height(&self, xp: f64, t: f64) -> f64 {
        match &self.graph {
            Some(f) => f(xp, t),
            None => f64::NEG_INFINITY,
        }
    }

    fn xp(&self, x: &[f64]) -> f64 {
        if self.dim == 2 {
            x[0]
        } else {
            0.0
        }
    }

    /// Height above the graph, `x_n − f(x', t)`.
    pub fn graph_distance(&self, x: &[f64], t: f64) -> f64 {
        x[self.dim - 1] - self.height(self.xp(x), t)
    }

    pub fn ball_distance(&self, x: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.radius - d2.sqrt()
    }

    /// Lower bound-style distance to the boundary: the smaller of the
    /// vertical graph distance and the distance to the sphere.
    pub fn boundary_distance(&self, x: &[f64], t: f64) -> f64 {
        self.graph_distance(x, t).min(self.ball_distance(x))
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        self.boundary_distance(x, t) > 1e-12
    }

    /// `(∂₁f, ∂_t f)` by central differences.
    pub fn graph_slope(&self, xp: f64, t: f64) -> (f64, f64) {
        let e = 1e-5;
        let d1 = if self.dim == 2 { (self.height(xp + e, t) - self.height(xp - e, t)) / (2.0 * e) } else { 0.0 };
        let dt = (self.height(xp, t + e) - self.height(xp, t - e)) / (2.0 * e);
        (d1, dt)
    }

    /// Inward unit normal `(−∇'f, 1)/|(−∇'f, 1)|` at the graph point over `x'`.
    pub fn normal(&self, xp: f64, t: f64) -> Vec<f64> {
        if self.dim == 1 {
            return vec![1.0];
        }
        let (d1, _) = self.graph_slope(xp, t);
        let norm = (1.0 + d1 * d1).sqrt();
        vec![-d1 / norm, 1.0 / norm]
    }

    /// `f(0,0) = 0` and `∇'f(0,0) = 0`.
    pub fn is_normalized(&self) -> bool {
        match self.graph {
            None => false,
            Some(_) => self.height(0.0, 0.0).abs() < 1e-12 && self.graph_slope(0.0, 0.0).0.abs() < 1e-8,
        }
    }

    /// Distance along `dir·e_axis` from `x` to the boundary if it is crossed
    /// within `h`.
    fn crossing(&self, x: &[f64; 2], axis: usize, dir: f64, t: f64, h: f64) -> Option<f64> {
        let n = self.dim;
        let mut best: Option<f64> = None;
        let mut take = |s: f64| {
            if s.is_finite() && s <= h * (1.0 + 1e-12) {
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        };
        // sphere
        let d: Vec<f64> = (0..n).map(|i| x[i] - self.center[i]).collect();
        let d2: f64 = d.iter().map(|v| v * v).sum();
        let da = d[axis] * dir;
        let disc = da * da - d2 + self.radius * self.radius;
        if disc >= 0.0 {
            take(-da + disc.sqrt());
        }
        if self.graph.is_some() {
            if axis == n - 1 {
                if dir < 0.0 {
                    take(self.graph_distance(&x[..n], t));
                }
            } else {
                let phi = |s: f64| x[1] - self.height(x[0] + dir * s, t);
                if phi(h) <= 1e-12 {
                    let (mut lo, mut hi) = (0.0, h);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if phi(mid) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    take(0.5 * (lo + hi));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub h: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    CrankNicolson,
    BackwardEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub scheme: TimeScheme,
    /// Leading steps replaced by two backward-Euler half steps each.
    pub rannacher_steps: usize,
    pub theta_min: f64,
    /// Crank–Nicolson only: reject `τ > ratio·h`.
    pub max_tau_over_h: f64,
    /// Reject `h·κ` above this.
    pub max_h_kappa: f64,
    pub linear_tol: f64,
    pub max_iterations: usize,
    /// Relative tolerance of the maximum-principle assertion; `None` skips it.
    pub max_principle_tol: Option<f64>,
    pub ellipticity: (f64, f64),
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            scheme: TimeScheme::CrankNicolson,
            rannacher_steps: 0,
            theta_min: 0.1,
            max_tau_over_h: 1.0,
            max_h_kappa: 0.5,
            linear_tol: 1e-10,
            max_iterations: 20_000,
            max_principle_tol: Some(1e-6),
            ellipticity: (0.1, 10.0),
        }
    }
}

/// Coefficients of `L w = Tr(A D²w) + ⟨b, Dw⟩ + c w − ∂_t w` and the
/// right-hand side `g` of `L w = g`. Missing fields mean `A = I`, `b = 0`,
/// `c = 0`, `g = 0`.
#[derive(Clone, Default)]
pub struct VcFields {
    pub a: Option<MatrixFn>,
    pub b: Option<VectorFn>,
    pub c: Option<ScalarFn>,
    pub g: Option<ScalarFn>,
}

impl VcFields {
    /// `∂_t u = Δu + source`, i.e. `g = −source`.
    pub fn heat(source: Option<ScalarFn>) -> Self {
        let g = source.map(|s| -> ScalarFn { Arc::new(move |x: &[f64], t: f64| -s(x, t)) });
        Self { g, ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub steps: usize,
    pub linear_iterations: usize,
    pub interpolation_rows: usize,
    pub backward_euler_rows: usize,
    pub newly_active_nodes: usize,
    /// Largest mismatch between initial data and boundary data at `t_start`.
    pub compatibility_defect: f64,
    pub max_principle_excess: Option<f64>,
}

/// A sampled field on the lattice: one dense array per time level, `NaN` at
/// inactive nodes.
#[derive(Clone)]
pub struct GridField {
    domain: GraphDomain,
    grid: Grid,
    lo: [i64; 2],
    shape: [usize; 2],
    levels: Vec<Vec<f64>>,
    diagnostics: SolveDiagnostics,
}

impl std::fmt::Debug for GridField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridField")
            .field("grid", &self.grid)
            .field("shape", &self.shape)
            .field("levels", &self.levels.len())
            .finish()
    }
}

/// Lattice layout shared by all levels.
#[derive(Clone, Copy)]
struct Layout {
    dim: usize,
    h: f64,
    lo: [i64; 2],
    shape: [usize; 2],
}

impl Layout {
    fn new(domain: &GraphDomain, h: f64) -> Self {
        let mut lo = [0i64; 2];
        let mut shape = [1usize; 2];
        for a in 0..domain.dim {
            let a_lo = ((domain.center[a] - domain.radius) / h).floor() as i64;
            let a_hi = ((domain.center[a] + domain.radius) / h).ceil() as i64;
            lo[a] = a_lo;
            shape[a] = (a_hi - a_lo + 1) as usize;
        }
        Self { dim: domain.dim, h, lo, shape }
    }

    fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    fn cell(&self, ix: usize, iy: usize) -> usize {
        ix * self.shape[1] + iy
    }

    fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.shape[1], cell % self.shape[1])
    }

    fn coords(&self, cell: usize) -> [f64; 2] {
        let (ix, iy) = self.split(cell);
        let x0 = (self.lo[0] + ix as i64) as f64 * self.h;
        if self.dim == 1 {
            [x0, 0.0]
        } else {
            [x0, (self.lo[1] + iy as i64) as f64 * self.h]
        }
    }

    /// Neighbor along `axis` in direction `dir`.
    fn neighbor(&self, cell: usize, axis: usize, dir: i64) -> Option<usize> {
        let (ix, iy) = self.split(cell);
        let mut idx = [ix as i64, iy as i64];
        idx[axis] += dir;
        if idx[axis] < 0 || idx[axis] >= self.shape[axis] as i64 {
            return None;
        }
        Some(self.cell(idx[0] as usize, idx[1] as usize))
    }

    fn offset(&self, cell: usize, d: [i64; 2]) -> Option<usize> {
        let (ix, iy) = self.split(cell);
        let jx = ix as i64 + d[0];
        let jy = iy as i64 + d[1];
        if jx < 0 || jy < 0 || jx >= self.shape[0] as i64 || jy >= self.shape[1] as i64 {
            return None;
        }
        Some(self.cell(jx as usize, jy as usize))
    }
}

/// One side of a Shortley–Weller stencil.
#[derive(Clone, Copy, Debug)]
enum Side {
    Node(usize),
    Boundary { theta: f64, value: f64 },
}

impl Side {
    fn theta(&self) -> f64 {
        match self {
            Side::Node(_) => 1.0,
            Side::Boundary { theta, .. } => *theta,
        }
    }
}

/// `L_h u` at one node: `diag·u_P + Σ w·u_Q + constant`.
#[derive(Clone, Debug, Default)]
struct Row {
    diag: f64,
    nbrs: Vec<(usize, f64)>,
    constant: f64,
}

impl Row {
    fn add(&mut self, side: Side, w: f64) {
        match side {
            Side::Node(c) => self.nbrs.push((c, w)),
            Side::Boundary { value, .. } => self.constant += w * value,
        }
    }

    fn apply(&self, me: usize, values: &[f64]) -> f64 {
        let mut s = self.diag * values[me] + self.constant;
        for &(c, w) in &self.nbrs {
            s += w * values[c];
        }
        s
    }
}

#[derive(Clone, Debug)]
enum Stencil {
    Pde(Row),
    /// `u_P = wl·left + wr·right` along the axis with the shortest arm.
    Interp {
        left: Side,
        right: Side,
        wl: f64,
        wr: f64,
    },
}

struct Level {
    time: f64,
    active: Vec<bool>,
    stencils: Vec<Option<Stencil>>,
    /// `g` at active nodes.
    rhs: Vec<f64>,
    data_lo: f64,
    data_hi: f64,
}

struct Assembler<'a> {
    domain: &'a GraphDomain,
    layout: Layout,
    fields: &'a VcFields,
    bc: Option<&'a ScalarFn>,
    options: &'a SolveOptions,
}

impl Assembler<'_> {
    fn bc_value(&self, x: &[f64], t: f64) -> f64 {
        self.bc.map_or(0.0, |f| f(&x[..self.layout.dim], t))
    }

    fn side(&self, active: &[bool], cell: usize, x: &[f64; 2], axis: usize, dir: i64, t: f64) -> Side {
        let h = self.layout.h;
        if let Some(nb) = self.layout.neighbor(cell, axis, dir) {
            if active[nb] {
                return Side::Node(nb);
            }
        }
        let s = self.domain.crossing(x, axis, dir as f64, t, h).unwrap_or(h).clamp(1e-14 * h, h);
        let mut p = *x;
        p[axis] += dir as f64 * s;
        Side::Boundary { theta: s / h, value: self.bc_value(&p, t) }
    }

    fn level(&self, t: f64) -> Result<Level, HeatError> {
        let lay = self.layout;
        let n = lay.dim;
        let mut active = vec![false; lay.len()];
        let mut any = false;
        for (cell, a) in active.iter_mut().enumerate() {
            let x = lay.coords(cell);
            *a = self.domain.contains(&x[..n], t);
            any |= *a;
        }
        if !any {
            return Err(HeatError::EmptySlice(t));
        }
        let (lam, big_lam) = self.options.ellipticity;
        let mut stencils = vec![None; lay.len()];
        let mut rhs = vec![0.0; lay.len()];
        let mut data_lo = f64::INFINITY;
        let mut data_hi = f64::NEG_INFINITY;
        let h = lay.h;
        for cell in 0..lay.len() {
            if !active[cell] {
                continue;
            }
            let x = lay.coords(cell);
            let xs = &x[..n];
            let sides: Vec<(Side, Side)> = (0..n)
                .map(|a| (self.side(&active, cell, &x, a, -1, t), self.side(&active, cell, &x, a, 1, t)))
                .collect();
            for (l, r) in &sides {
                for s in [l, r] {
                    if let Side::Boundary { value, .. } = s {
                        data_lo = data_lo.min(*value);
                        data_hi = data_hi.max(*value);
                    }
                }
            }
            if let Some(g) = &self.fields.g {
                rhs[cell] = g(xs, t);
            }
            // shortest arm decides between a PDE row and interpolation
            let (axis, theta_min) = sides
                .iter()
                .enumerate()
                .map(|(a, (l, r))| (a, l.theta().min(r.theta())))
                .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            if theta_min < self.options.theta_min {
                let (l, r) = sides[axis];
                let (tl, tr) = (l.theta(), r.theta());
                stencils[cell] = Some(Stencil::Interp { left: l, right: r, wl: tr / (tl + tr), wr: tl / (tl + tr) });
                continue;
            }

            let a = match &self.fields.a {
                Some(f) => {
                    let m = f(xs, t);
                    if !elliptic(&m, n, lam, big_lam) {
                        return Err(HeatError::Ellipticity { x: xs.to_vec(), t });
                    }
                    m
                }
                None => [[1.0, 0.0], [0.0, 1.0]],
            };
            let b = self.fields.b.as_ref().map_or([0.0; 2], |f| f(xs, t));
            let c = self.fields.c.as_ref().map_or(0.0, |f| f(xs, t));

            let mut row = Row { diag: c, ..Row::default() };
            for (ax, &(l, r)) in sides.iter().enumerate() {
                let (tl, tr) = (l.theta(), r.theta());
                let h2 = h * h;
                // second derivative
                let wl = 2.0 / (h2 * tl * (tl + tr));
                let wr = 2.0 / (h2 * tr * (tl + tr));
                let wp = -2.0 / (h2 * tl * tr);
                let aa = a[ax][ax];
                row.add(l, aa * wl);
                row.add(r, aa * wr);
                row.diag += aa * wp;
                // first derivative
                let den = tl * tr * (tl + tr) * h;
                row.add(r, b[ax] * tl * tl / den);
                row.add(l, -b[ax] * tr * tr / den);
                row.diag += -b[ax] * (tl * tl - tr * tr) / den;
            }
            if n == 2 {
                let a01 = a[0][1] + a[1][0];
                if a01 != 0.0 {
                    mixed_term(&mut row, &lay, &active, cell, &sides, a01 / (4.0 * h * h));
                }
            }
            stencils[cell] = Some(Stencil::Pde(row));
        }
        Ok(Level { time: t, active, stencils, rhs, data_lo, data_hi })
    }
}

fn elliptic(m: &[[f64; 2]; 2], n: usize, lam: f64, big_lam: f64) -> bool {
    if n == 1 {
        return m[0][0] >= lam && m[0][0] <= big_lam;
    }
    let off = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let rad = (0.25 * (m[0][0] - m[1][1]).powi(2) + off * off).sqrt();
    mean - rad >= lam && mean + rad <= big_lam
}

/// `w·(u₊₊ − u₊₋ − u₋₊ + u₋₋)`. Missing corners are replaced by the bilinear
/// ghost `u_{±,0} + u_{0,±} − u_P`; nodes with a short axis arm skip the term.
fn mixed_term(row: &mut Row, lay: &Layout, active: &[bool], cell: usize, sides: &[(Side, Side)], w: f64) {
    let axis_node = |ax: usize, dir: i64| -> Option<usize> {
        let s = if dir < 0 { sides[ax].0 } else { sides[ax].1 };
        match s {
            Side::Node(c) => Some(c),
            Side::Boundary { .. } => None,
        }
    };
    let mut terms: Vec<(Option<usize>, f64)> = Vec::with_capacity(12);
    for (dx, dy, sign) in [(1i64, 1i64, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
        match lay.offset(cell, [dx, dy]).filter(|&c| active[c]) {
            Some(c) => terms.push((Some(c), sign * w)),
            None => {
                let (Some(cx), Some(cy)) = (axis_node(0, dx), axis_node(1, dy)) else {
                    return;
                };
                terms.push((Some(cx), sign * w));
                terms.push((Some(cy), sign * w));
                terms.push((None, -sign * w));
            }
        }
    }
    for (c, v) in terms {
        match c {
            Some(c) => row.nbrs.push((c, v)),
            None => row.diag += v,
        }
    }
}

/// Compressed sparse rows with duplicate entries summed.
struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut ptr = Vec::with_capacity(rows.len() + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                if col.len() > *ptr.last().unwrap() && *col.last().unwrap() == c {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                }
            }
            ptr.push(col.len());
        }
        Self { ptr, col, val }
    }

    fn n(&self) -> usize {
        self.ptr.len() - 1
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n() {
            let mut s = 0.0;
            for k in self.ptr[i]..self.ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| (self.ptr[i]..self.ptr[i + 1]).find(|&k| self.col[k] == i).map_or(0.0, |k| self.val[k]))
            .collect()
    }

    /// Thomas algorithm when every row only touches `i−1, i, i+1`.
    fn solve_tridiagonal(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            for k in self.ptr[i]..self.ptr[i + 1] {
                let j = self.col[k];
                if j + 1 == i {
                    a[i] = self.val[k];
                } else if j == i {
                    b[i] = self.val[k];
                } else if j == i + 1 {
                    c[i] = self.val[k];
                } else {
                    return None;
                }
            }
        }
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let m = b[i] - if i > 0 { a[i] * cp[i - 1] } else { 0.0 };
            if m.abs() < 1e-300 {
                return None;
            }
            cp[i] = c[i] / m;
            dp[i] = (rhs[i] - if i > 0 { a[i] * dp[i - 1] } else { 0.0 }) / m;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = dp[i] - if i + 1 < n { cp[i] * x[i + 1] } else { 0.0 };
        }
        Some(x)
    }

    /// Incomplete LU factorization with the sparsity of the matrix itself.
    /// Columns within a row are sorted and every row holds its diagonal.
    fn ilu0(&self) -> Option<Ilu> {
        let n = self.n();
        let mut val = self.val.clone();
        let mut diag = vec![0usize; n];
        for (i, d) in diag.iter_mut().enumerate() {
            *d = (self.ptr[i]..self.ptr[i + 1]).find(|&k| self.col[k] == i)?;
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in self.ptr[i]..self.ptr[i + 1] {
                pos[self.col[p]] = p;
            }
            for p in self.ptr[i]..diag[i] {
                let k = self.col[p];
                let lik = val[p] / val[diag[k]];
                val[p] = lik;
                for q in diag[k] + 1..self.ptr[k + 1] {
                    let j = self.col[q];
                    if pos[j] != usize::MAX {
                        val[pos[j]] -= lik * val[q];
                    }
                }
            }
            for p in self.ptr[i]..self.ptr[i + 1] {
                pos[self.col[p]] = usize::MAX;
            }
            if val[diag[i]] == 0.0 {
                return None;
            }
        }
        Some(Ilu { ptr: self.ptr.clone(), col: self.col.clone(), val, diag })
    }

    /// BiCGSTAB, right-preconditioned with ILU(0) (Jacobi if the
    /// factorization breaks down).
    fn bicgstab(&self, rhs: &[f64], x0: Vec<f64>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize), HeatError> {
        let n = self.n();
        let ilu = self.ilu0();
        let dinv: Vec<f64> = self.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
        let precond = |src: &[f64], dst: &mut [f64]| match &ilu {
            Some(f) => f.solve(src, dst),
            None => {
                for i in 0..src.len() {
                    dst[i] = dinv[i] * src[i];
                }
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let bnorm = dot(rhs, rhs).sqrt().max(1e-300);
        let mut x = x0;
        let mut r = vec![0.0; n];
        self.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = rhs[i] - r[i];
        }
        let mut res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok((x, 0));
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut tv = vec![0.0; n];
        for it in 1..=max_iter {
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond(&p, &mut y);
            self.matvec(&y, &mut v);
            alpha = rho / dot(&r_hat, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if dot(&s, &s).sqrt() / bnorm <= tol {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                return Ok((x, it));
            }
            precond(&s, &mut z);
            self.matvec(&z, &mut tv);
            omega = dot(&tv, &s) / dot(&tv, &tv);
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * tv[i];
            }
            res = dot(&r, &r).sqrt() / bnorm;
            if res <= tol {
                return Ok((x, it));
            }
            if omega == 0.0 {
                break;
            }
        }
        Err(HeatError::LinearSolve { residual: res, iterations: max_iter })
    }
}

struct Ilu {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu {
    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut s = b[i];
            for p in self.ptr[i]..self.diag[i] {
                s -= self.val[p] * x[self.col[p]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag[i] + 1..self.ptr[i + 1] {
                s -= self.val[p] * x[self.col[p]];
            }
            x[i] = s / self.val[self.diag[i]];
        }
    }
}

/// `∂_t u = Δu + source` with Dirichlet data `bc` (zero when `None`) on the
/// lateral boundary, marching from the bottom of the cylinder.
pub fn solve_heat(
    domain: &GraphDomain,
    initial: &dyn Fn(&[f64]) -> f64,
    bc: Option<&ScalarFn>,
    source: Option<ScalarFn>,
    grid: Grid,
    options: &SolveOptions,
) -> Result<GridField, HeatError> {
    solve_vc(domain, &VcFields::heat(source), initial, bc, grid, options)
}

/// `L w = g` with the same boundary treatment as [`solve_heat`].
pub fn solve_vc(
    domain: &GraphDomain,
    fields: &VcFields,
    initial: &dyn Fn(&[f64]) -> f64,
    bc: Option<&ScalarFn>,
    grid: Grid,
    options: &SolveOptions,
) -> Result<GridField, HeatError> {
    let Grid { h, tau } = grid;
    if !(h > 0.0 && tau > 0.0 && h.is_finite() && tau.is_finite()) {
        return Err(HeatError::InvalidGrid(format!("h = {h}, tau = {tau}")));
    }
    if options.scheme == TimeScheme::CrankNicolson && tau > options.max_tau_over_h * h * (1.0 + 1e-12) {
        return Err(HeatError::InvalidGrid(format!(
            "tau/h = {} exceeds the allowed ratio {}",
            tau / h,
            options.max_tau_over_h
        )));
    }
    if h * domain.curvature_bound > options.max_h_kappa {
        return Err(HeatError::Unresolved(h * domain.curvature_bound));
    }
    let span = domain.t_end - domain.t_start;
    let steps = (span / tau).round() as usize;
    if steps == 0 || ((steps as f64) * tau - span).abs() > 1e-9 * span {
        return Err(HeatError::InvalidGrid(format!("time window {span} is not a multiple of tau = {tau}")));
    }
    let layout = Layout::new(domain, h);
    let n = domain.dim;
    let asm = Assembler { domain, layout, fields, bc, options };

    let mut diagnostics = SolveDiagnostics { steps, ..Default::default() };
    let mut level = asm.level(domain.t_start)?;
    let mut values = vec![f64::NAN; layout.len()];
    let mut data_lo = level.data_lo;
    let mut data_hi = level.data_hi;
    for cell in 0..layout.len() {
        if level.active[cell] {
            let x = layout.coords(cell);
            values[cell] = initial(&x[..n]);
            data_lo = data_lo.min(values[cell]);
            data_hi = data_hi.max(values[cell]);
        }
    }
    diagnostics.compatibility_defect = compatibility_defect(&asm, &level, initial);
    let mut levels = Vec::with_capacity(steps + 1);
    levels.push(values.clone());

    for j in 0..steps {
        let t_new = domain.t_start + (j + 1) as f64 * tau;
        if j < options.rannacher_steps {
            let t_mid = t_new - 0.5 * tau;
            let mid = asm.level(t_mid)?;
            values = step(&asm, &level, &values, None, &mid, TimeScheme::BackwardEuler, &mut diagnostics)?;
            let next = asm.level(t_new)?;
            values = step(&asm, &mid, &values, None, &next, TimeScheme::BackwardEuler, &mut diagnostics)?;
            level = next;
        } else {
            let next = asm.level(t_new)?;
            let prev = if j >= 1 { Some(levels[j - 1].as_slice()) } else { None };
            values = step(&asm, &level, &values, prev, &next, options.scheme, &mut diagnostics)?;
            level = next;
        }
        data_lo = data_lo.min(level.data_lo);
        data_hi = data_hi.max(level.data_hi);
        levels.push(values.clone());
    }

    let field = GridField { domain: domain.clone(), grid, lo: layout.lo, shape: layout.shape, levels, diagnostics };
    check_max_principle(field, fields, options, data_lo, data_hi)
}

fn compatibility_defect(asm: &Assembler<'_>, level: &Level, initial: &dyn Fn(&[f64]) -> f64) -> f64 {
    let lay = asm.layout;
    let n = lay.dim;
    let mut worst: f64 = 0.0;
    for cell in 0..lay.len() {
        if !level.active[cell] {
            continue;
        }
        let x = lay.coords(cell);
        for a in 0..n {
            for dir in [-1, 1] {
                if let Side::Boundary { theta, value } = asm.side(&level.active, cell, &x, a, dir, level.time) {
                    let mut p = x;
                    p[a] += dir as f64 * theta * lay.h;
                    worst = worst.max((initial(&p[..n]) - value).abs());
                }
            }
        }
    }
    worst
}

fn check_max_principle(
    mut field: GridField,
    fields: &VcFields,
    options: &SolveOptions,
    mut lo: f64,
    mut hi: f64,
) -> Result<GridField, HeatError> {
    let Some(tol) = options.max_principle_tol else {
        return Ok(field);
    };
    if fields.g.is_some() {
        return Ok(field);
    }
    if let Some(c) = &fields.c {
        let n = field.domain.dim;
        let mut nonpositive = true;
        'outer: for j in 0..field.levels.len() {
            let t = field.time(j);
            for (_, x, _) in field.active(j) {
                if c(&x[..n], t) > 0.0 {
                    nonpositive = false;
                    break 'outer;
                }
            }
        }
        if !nonpositive {
            return Ok(field);
        }
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let mut excess: f64 = 0.0;
    for level in &field.levels {
        for &v in level.iter().filter(|v| !v.is_nan()) {
            excess = excess.max(v - hi).max(lo - v);
        }
    }
    field.diagnostics.max_principle_excess = Some(excess.max(0.0));
    if excess > tol * scale {
        return Err(HeatError::MaxPrinciple { excess, lo, hi });
    }
    Ok(field)
}

/// Old-level value for a node that was outside the previous slice: the new
/// interpolation formula along the shortest arm, evaluated with old data.
fn extrapolated_old(asm: &Assembler<'_>, old: &Level, old_values: &[f64], new: &Level, cell: usize) -> f64 {
    let lay = asm.layout;
    let x = lay.coords(cell);
    let mut best: Option<(f64, usize, Side, Side)> = None;
    for a in 0..lay.dim {
        let l = asm.side(&new.active, cell, &x, a, -1, new.time);
        let r = asm.side(&new.active, cell, &x, a, 1, new.time);
        let th = l.theta().min(r.theta());
        if best.is_none_or(|b| th < b.0) {
            best = Some((th, a, l, r));
        }
    }
    let (_, axis, l, r) = best.unwrap();
    let old_side = |s: Side, dir: f64| -> f64 {
        match s {
            Side::Node(c) if old.active[c] => old_values[c],
            Side::Node(c) => asm.bc_value(&lay.coords(c), old.time),
            Side::Boundary { theta, .. } => {
                let mut p = x;
                p[axis] += dir * theta * lay.h;
                asm.bc_value(&p, old.time)
            }
        }
    };
    let (tl, tr) = (l.theta(), r.theta());
    (tr * old_side(l, -1.0) + tl * old_side(r, 1.0)) / (tl + tr)
}

fn step(
    asm: &Assembler<'_>,
    old: &Level,
    old_values: &[f64],
    prev_values: Option<&[f64]>,
    new: &Level,
    scheme: TimeScheme,
    diag: &mut SolveDiagnostics,
) -> Result<Vec<f64>, HeatError> {
    let lay = asm.layout;
    let tau = new.time - old.time;
    let mut index = vec![usize::MAX; lay.len()];
    let mut cells = Vec::new();
    for cell in 0..lay.len() {
        if new.active[cell] {
            index[cell] = cells.len();
            cells.push(cell);
        }
    }
    let mut rows = Vec::with_capacity(cells.len());
    let mut rhs = Vec::with_capacity(cells.len());
    for &cell in &cells {
        let i = index[cell];
        match new.stencils[cell].as_ref().unwrap() {
            Stencil::Interp { left, right, wl, wr } => {
                diag.interpolation_rows += 1;
                let mut row = vec![(i, 1.0)];
                let mut b = 0.0;
                for (s, w) in [(left, wl), (right, wr)] {
                    match s {
                        Side::Node(c) => row.push((index[*c], -w)),
                        Side::Boundary { value, .. } => b += w * value,
                    }
                }
                rows.push(row);
                rhs.push(b);
            }
            Stencil::Pde(new_row) => {
                let old_pde = match old.stencils[cell].as_ref() {
                    Some(Stencil::Pde(r)) if old.active[cell] => Some(r),
                    _ => None,
                };
                let u_old = if old.active[cell] {
                    old_values[cell]
                } else {
                    diag.newly_active_nodes += 1;
                    extrapolated_old(asm, old, old_values, new, cell)
                };
                let (weight, explicit) = match (scheme, old_pde) {
                    (TimeScheme::CrankNicolson, Some(r)) => {
                        (0.5, 0.5 * tau * (r.apply(cell, old_values) - old.rhs[cell]))
                    }
                    _ => {
                        diag.backward_euler_rows += 1;
                        (1.0, 0.0)
                    }
                };
                let mut row = Vec::with_capacity(new_row.nbrs.len() + 1);
                row.push((i, 1.0 - weight * tau * new_row.diag));
                for &(c, w) in &new_row.nbrs {
                    row.push((index[c], -weight * tau * w));
                }
                rows.push(row);
                rhs.push(u_old + explicit + weight * tau * (new_row.constant - new.rhs[cell]));
            }
        }
    }
    let matrix = Csr::from_rows(rows);
    let solution = if lay.dim == 1 { matrix.solve_tridiagonal(&rhs) } else { None };
    let solution = match solution {
        Some(s) => s,
        None => {
            // linear extrapolation in time where two previous values exist
            let guess: Vec<f64> = cells
                .iter()
                .map(|&c| {
                    let a = if old.active[c] { old_values[c] } else { f64::NAN };
                    let b = prev_values.map_or(f64::NAN, |p| p[c]);
                    match (a.is_nan(), b.is_nan()) {
                        (false, false) => 2.0 * a - b,
                        (false, true) => a,
                        _ => 0.0,
                    }
                })
                .collect();
            let (s, its) = matrix.bicgstab(&rhs, guess, asm.options.linear_tol, asm.options.max_iterations)?;
            diag.linear_iterations += its;
            s
        }
    };
    let mut out = vec![f64::NAN; lay.len()];
    for (k, &cell) in cells.iter().enumerate() {
        out[cell] = solution[k];
    }
    Ok(out)
}

impl GridField {
    /// Samples a closed-form function at the active nodes of every level.
    pub fn from_fn(domain: &GraphDomain, grid: Grid, f: impl Fn(&[f64], f64) -> f64) -> Result<Self, HeatError> {
        let span = domain.t_end - domain.t_start;
        let steps = (span / grid.tau).round() as usize;
        if steps == 0 || ((steps as f64) * grid.tau - span).abs() > 1e-9 * span {
            return Err(HeatError::InvalidGrid(format!("time window {span} is not a multiple of tau = {}", grid.tau)));
        }
        let layout = Layout::new(domain, grid.h);
        let n = domain.dim;
        let mut levels = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let t = domain.t_start + j as f64 * grid.tau;
            let mut vals = vec![f64::NAN; layout.len()];
            for (cell, v) in vals.iter_mut().enumerate() {
                let x = layout.coords(cell);
                if domain.contains(&x[..n], t) {
                    *v = f(&x[..n], t);
                }
            }
            levels.push(vals);
        }
        Ok(Self {
            domain: domain.clone(),
            grid,
            lo: layout.lo,
            shape: layout.shape,
            levels,
            diagnostics: SolveDiagnostics { steps, ..Default::default() },
        })
    }

    fn layout(&self) -> Layout {
        Layout { dim: self.domain.dim, h: self.grid.h, lo: self.lo, shape: self.shape }
    }

    pub fn domain(&self) -> &GraphDomain {
        &self.domain
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.diagnostics
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.domain.t_start + level as f64 * self.grid.tau
    }

    /// Level whose time matches `t` up to rounding.
    pub fn level_at(&self, t: f64) -> Option<usize> {
        let j = ((t - self.domain.t_start) / self.grid.tau).round();
        if j < 0.0 || j as usize >= self.levels.len() {
            return None;
        }
        let j = j as usize;
        ((self.time(j) - t).abs() <= 1e-9 * self.grid.tau.max(1.0)).then_some(j)
    }

    /// Value at integer node `i` (`i·h` in each coordinate).
    pub fn at(&self, level: usize, i: &[i64]) -> Option<f64> {
        let lay = self.layout();
        let ix = i[0] - self.lo[0];
        let iy = if lay.dim == 2 { i[1] - self.lo[1] } else { 0 };
        if ix < 0 || iy < 0 || ix >= self.shape[0] as i64 || iy >= self.shape[1] as i64 {
            return None;
        }
        let v = self.levels.get(level)?[lay.cell(ix as usize, iy as usize)];
        (!v.is_nan()).then_some(v)
    }

    /// Active nodes of a level in lattice order: `(integer index, x, value)`.
    pub fn active(&self, level: usize) -> impl Iterator<Item = ([i64; 2], [f64; 2], f64)> + '_ {
        let lay = self.layout();
        self.levels[level].iter().enumerate().filter(|(_, v)| !v.is_nan()).map(move |(cell, &v)| {
            let (ix, iy) = lay.split(cell);
            ([self.lo[0] + ix as i64, self.lo[1] + iy as i64], lay.coords(cell), v)
        })
    }

    pub fn level_values(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.lo == other.lo
            && self.shape == other.shape
            && self.levels.len() == other.levels.len()
    }

    /// Pointwise combination on a shared grid; `None` marks the node inactive.
    pub fn zip_with(
        &self,
        other: &Self,
        mut f: impl FnMut(f64, f64, [f64; 2], f64) -> Option<f64>,
    ) -> Result<Self, HeatError> {
        if !self.same_grid(other) {
            return Err(HeatError::GridMismatch);
        }
        let lay = self.layout();
        let mut out = self.clone();
        out.diagnostics = SolveDiagnostics::default();
        for j in 0..self.levels.len() {
            let t = self.time(j);
            for cell in 0..lay.len() {
                let (a, b) = (self.levels[j][cell], other.levels[j][cell]);
                out.levels[j][cell] =
                    if a.is_nan() || b.is_nan() { f64::NAN } else { f(a, b, lay.coords(cell), t).unwrap_or(f64::NAN) };
            }
        }
        Ok(out)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        for level in &mut out.levels {
            for v in level.iter_mut().filter(|v| !v.is_nan()) {
                *v = f(*v);
            }
        }
        out
    }

    /// Largest `|value|` over all levels.
    pub fn sup_norm(&self) -> f64 {
        self.levels.iter().flatten().filter(|v| !v.is_nan()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Tensor cubic interpolation in space, and in time unless `t` is a
    /// level. `None` when the stencil touches inactive nodes.
    pub fn sample(&self, x: &[f64], t: f64) -> Option<f64> {
        let n = self.dim();
        let (levels, tw): (Vec<usize>, Vec<f64>) = match self.level_at(t) {
            Some(j) => (vec![j], vec![1.0]),
            None => {
                let s = (t - self.domain.t_start) / self.grid.tau;
                let base = (s.floor() as i64 - 1).clamp(0, self.levels.len() as i64 - 4);
                if base < 0 || s < 0.0 || s > (self.levels.len() - 1) as f64 {
                    return None;
                }
                let nodes: Vec<f64> = (0..4).map(|k| (base + k) as f64).collect();
                ((0..4).map(|k| (base + k) as usize).collect(), lagrange_weights(&nodes, s))
            }
        };
        let mut axes: Vec<(i64, [f64; 4])> = Vec::with_capacity(n);
        for &xa in x.iter().take(n) {
            let s = xa / self.grid.h;
            let base = s.floor() as i64 - 1;
            let nodes: Vec<f64> = (0..4).map(|k| (base + k) as f64).collect();
            let w = lagrange_weights(&nodes, s);
            axes.push((base, [w[0], w[1], w[2], w[3]]));
        }
        let mut total = 0.0;
        for (&j, &wt) in levels.iter().zip(&tw) {
            let mut acc = 0.0;
            if n == 1 {
                for k in 0..4 {
                    acc += axes[0].1[k] * self.at(j, &[axes[0].0 + k as i64])?;
                }
            } else {
                for k0 in 0..4 {
                    for k1 in 0..4 {
                        let v = self.at(j, &[axes[0].0 + k0 as i64, axes[1].0 + k1 as i64])?;
                        acc += axes[0].1[k0] * axes[1].1[k1] * v;
                    }
                }
            }
            total += wt * acc;
        }
        Some(total)
    }

    /// CSV export: `level,t,x1[,x2],value`, time-major then lattice order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HeatError> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.dim();
        let mut header = vec!["level", "t", "x1"];
        if n == 2 {
            header.push("x2");
        }
        header.push("value");
        w.write_record(&header).map_err(|e| HeatError::Io(e.to_string()))?;
        for j in 0..self.levels.len() {
            let t = self.time(j);
            for (_, x, v) in self.active(j) {
                let mut rec = vec![j.to_string(), format!("{t:e}"), format!("{:e}", x[0])];
                if n == 2 {
                    rec.push(format!("{:e}", x[1]));
                }
                rec.push(format!("{v:e}"));
                w.write_record(&rec).map_err(|e| HeatError::Io(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| HeatError::Io(e.to_string()))
    }

    /// Rescales the whole field by a constant, e.g. to impose
    /// `u(e_n, t₀) = 1` after the fact.
    pub fn normalized_at(&self, x: &[f64], t: f64) -> Result<(Self, f64), HeatError> {
        let v = self.sample(x, t).ok_or(HeatError::InsufficientStencil { x: x.to_vec(), t })?;
        if v == 0.0 {
            return Err(HeatError::InsufficientStencil { x: x.to_vec(), t });
        }
        Ok((self.map(|w| w / v), 1.0 / v))
    }
}

fn lagrange_weights(nodes: &[f64], s: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| {
            let mut w = 1.0;
            for j in 0..nodes.len() {
                if j != i {
                    w *= (s - nodes[j]) / (nodes[i] - nodes[j]);
                }
            }
            w
        })
        .collect()
}

/// Inward normal derivative at the graph point over `x'` at a stored level:
/// the quadratic through the boundary value and samples at `3h`, `6h` along
/// the normal.
pub fn normal_derivative(field: &GridField, xp: f64, t: f64, bc: Option<&ScalarFn>) -> Result<f64, HeatError> {
    let dom = field.domain();
    let n = dom.dim();
    let nu = dom.normal(xp, t);
    let base: Vec<f64> = if n == 1 { vec![dom.height(0.0, t)] } else { vec![xp, dom.height(xp, t)] };
    let s = 3.0 * field.grid().h;
    let at = |k: f64| -> Result<f64, HeatError> {
        let p: Vec<f64> = base.iter().zip(&nu).map(|(b, v)| b + k * s * v).collect();
        field.sample(&p, t).ok_or_else(|| HeatError::InsufficientStencil { x: p.clone(), t })
    };
    let u0 = bc.map_or(0.0, |f| f(&base, t));
    let (u1, u2) = (at(1.0)?, at(2.0)?);
    Ok((-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_interval(t_end: f64) -> GraphDomain {
        GraphDomain::new(1, None, vec![0.5], 0.5, 0.0, t_end).unwrap()
    }

    #[test]
    fn linear_profile_is_steady() {
        // x on (0, 1) with boundary data x
        let dom = unit_interval(0.25);
        let bc: ScalarFn = Arc::new(|x: &[f64], _| x[0]);
        let h = 1.0 / 64.0;
        let u = solve_heat(&dom, &|x| x[0], Some(&bc), None, Grid { h, tau: h }, &SolveOptions::default()).unwrap();
        let last = u.n_levels() - 1;
        for (_, x, v) in u.active(last) {
            assert!((v - x[0]).abs() < 1e-12, "{v} vs {}", x[0]);
        }
    }

    #[test]
    fn sine_mode_decays_at_second_order() {
        let errs: Vec<f64> = [32.0, 64.0, 128.0]
            .iter()
            .map(|&m| {
                let h = 1.0 / m;
                let u = solve_heat(
                    &unit_interval(0.125),
                    &|x| (PI * x[0]).sin(),
                    None,
                    None,
                    Grid { h, tau: h },
                    &SolveOptions::default(),
                )
                .unwrap();
                let j = u.n_levels() - 1;
                let t = u.time(j);
                u.active(j).map(|(_, x, v)| (v - (-PI * PI * t).exp() * (PI * x[0]).sin()).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.3, "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn normal_derivative_of_linear_and_zero_fields() {
        let dom = GraphDomain::new(2, Some(Arc::new(|_, _| 0.0)), vec![0.0, 0.0], 1.0, -0.25, 0.0).unwrap();
        let g = Grid { h: 1.0 / 32.0, tau: 1.0 / 32.0 };
        let u = GridField::from_fn(&dom, g, |x, _| x[1]).unwrap();
        let j = u.n_levels() - 1;
        assert!((normal_derivative(&u, 0.1, u.time(j), None).unwrap() - 1.0).abs() < 1e-12);
        let z = GridField::from_fn(&dom, g, |_, _| 0.0).unwrap();
        assert_eq!(normal_derivative(&z, 0.0, z.time(j), None).unwrap(), 0.0);
    }

    #[test]
    fn bad_grids_are_rejected() {
        let dom = unit_interval(0.25);
        let r = solve_heat(&dom, &|_| 0.0, None, None, Grid { h: 0.01, tau: 0.03 }, &SolveOptions::default());
        assert!(matches!(r, Err(HeatError::InvalidGrid(_))));
        let r = solve_heat(&dom, &|_| 0.0, None, None, Grid { h: 0.01, tau: 0.0099 }, &SolveOptions::default());
        assert!(matches!(r, Err(HeatError::InvalidGrid(_))));
        let curved = unit_interval(0.25).with_curvature_bound(100.0);
        let r = solve_heat(&curved, &|_| 0.0, None, None, Grid { h: 0.0125, tau: 0.0125 }, &SolveOptions::default());
        assert!(matches!(r, Err(HeatError::Unresolved(_))));
    }

    #[test]
    fn empty_slice_is_an_error() {
        let dom = GraphDomain::new(1, Some(Arc::new(|_, _| 5.0)), vec![0.0], 1.0, 0.0, 0.5).unwrap();
        let r = solve_heat(&dom, &|_| 0.0, None, None, Grid { h: 0.1, tau: 0.1 }, &SolveOptions::default());
        assert!(matches!(r, Err(HeatError::EmptySlice(_))));
    }

    #[test]
    fn ellipticity_is_checked() {
        let dom = unit_interval(0.25);
        let fields = VcFields { a: Some(Arc::new(|_: &[f64], _| [[-1.0, 0.0], [0.0, 1.0]])), ..VcFields::default() };
        let r = solve_vc(&dom, &fields, &|_| 0.0, None, Grid { h: 0.125, tau: 0.125 }, &SolveOptions::default());
        assert!(matches!(r, Err(HeatError::Ellipticity { .. })));
    }

    #[test]
    fn csv_export_is_time_major() {
        let dom = unit_interval(0.25);
        let u = GridField::from_fn(&dom, Grid { h: 0.25, tau: 0.125 }, |x, t| x[0] + t).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "level,t,x1,value");
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[9].starts_with("2,"));
    }
}
