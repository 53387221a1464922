//! Experiment configuration: one TOML document per run, tagged by `kind`.

use std::sync::Arc;

use pbh_core::counterex::{ProbePath, Variant};
use pbh_core::heatlab::{GraphDomain, GraphFn, Grid, HeatError, ScalarFn, TimeScheme};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    VerifyApprox(VerifyApprox),
    CaloricBasis(CaloricBasis),
    Solve(Solve),
    HarnackExponent(HarnackExponent),
    Iterate(Iterate),
    Counterexample(Counterexample),
    ScalingCheck(ScalingCheck),
    ObstacleDemo(ObstacleDemo),
}

/// Random instances of the approximating-polynomial system, each checked
/// for exact annihilation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyApprox {
    pub n: usize,
    pub k: u32,
    pub instances: usize,
    pub seed: u64,
}

impl Default for VerifyApprox {
    fn default() -> Self {
        Self { n: 2, k: 3, instances: 100, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaloricBasis {
    pub n: usize,
    pub k: u32,
}

impl Default for CaloricBasis {
    fn default() -> Self {
        Self { n: 2, k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Plain ball, no graph.
    None,
    Flat,
    /// `f = amplitude·sin(x1 + t)`.
    Sine {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    pub graph: GraphSpec,
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            graph: GraphSpec::Sine { amplitude: 0.05 },
            center: vec![0.0, 0.0],
            radius: 1.0,
            t_start: -1.0,
            t_end: 0.0,
        }
    }
}

impl DomainSpec {
    fn graph_fn(&self) -> Option<GraphFn> {
        match self.graph {
            GraphSpec::None => None,
            GraphSpec::Flat => Some(Arc::new(|_, _| 0.0)),
            GraphSpec::Sine { amplitude } => Some(Arc::new(move |x1, t| amplitude * (x1 + t).sin())),
        }
    }

    pub fn build(&self) -> Result<GraphDomain, HeatError> {
        let kappa = match self.graph {
            GraphSpec::Sine { amplitude } => 2.0 * amplitude.abs(),
            _ => 0.0,
        };
        Ok(GraphDomain::new(self.dim, self.graph_fn(), self.center.clone(), self.radius, self.t_start, self.t_end)?
            .with_curvature_bound(kappa))
    }

    fn check(&self, at: &str, errs: &mut Vec<String>) {
        if !(1..=2).contains(&self.dim) {
            errs.push(format!("{at}.dim: must be 1 or 2, got {}", self.dim));
        }
        if self.center.len() != self.dim {
            errs.push(format!("{at}.center: needs {} entries, got {}", self.dim, self.center.len()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            errs.push(format!("{at}.radius: must be positive"));
        }
        if !(self.t_end > self.t_start) {
            errs.push(format!("{at}.t_end: must exceed t_start"));
        }
        if let GraphSpec::Sine { amplitude } = self.graph {
            if !(amplitude.abs() <= 0.25) {
                errs.push(format!("{at}.graph.amplitude: must be at most 0.25 in magnitude"));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    pub tau: f64,
}

impl GridSpec {
    pub fn grid(self) -> Grid {
        Grid { h: self.h, tau: self.tau }
    }

    fn check(&self, at: &str, errs: &mut Vec<String>) {
        if !(self.h > 0.0 && self.h <= 0.5) {
            errs.push(format!("{at}.h: must lie in (0, 0.5]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            errs.push(format!("{at}.tau: must lie in (0, 1]"));
        }
    }
}

/// Closed-form Dirichlet and initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Zero,
    /// `(x_n − f)(w0 + w1·x1 + w2·x_n + w3·x1²)`.
    GraphDistance {
        weights: [f64; 4],
    },
    /// `exp(x1 + … + xn + n·t)`, which is caloric.
    CaloricExponential,
}

impl DataSpec {
    pub fn function(&self, domain: &DomainSpec) -> ScalarFn {
        let graph = domain.graph_fn();
        let n = domain.dim;
        match self.clone() {
            DataSpec::Zero => Arc::new(|_: &[f64], _| 0.0),
            DataSpec::GraphDistance { weights: w } => Arc::new(move |x: &[f64], t| {
                let f = graph.as_ref().map_or(0.0, |g| g(x[0], t));
                let xn = x[n - 1];
                (xn - f) * (w[0] + w[1] * x[0] + w[2] * xn + w[3] * x[0] * x[0])
            }),
            DataSpec::CaloricExponential => Arc::new(move |x: &[f64], t| (x.iter().sum::<f64>() + n as f64 * t).exp()),
        }
    }

    pub fn is_caloric(&self, domain: &DomainSpec) -> bool {
        match self {
            DataSpec::Zero | DataSpec::CaloricExponential => true,
            DataSpec::GraphDistance { weights } => {
                !matches!(domain.graph, GraphSpec::Sine { .. }) && weights[3] == 0.0 && weights[2] == 0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelOutput {
    Final,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Solve {
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub data: DataSpec,
    pub scheme: TimeScheme,
    pub rannacher_steps: usize,
    pub levels: LevelOutput,
}

impl Default for Solve {
    fn default() -> Self {
        Self {
            domain: DomainSpec::default(),
            grid: GridSpec { h: 1.0 / 32.0, tau: 1.0 / 32.0 },
            data: DataSpec::CaloricExponential,
            scheme: TimeScheme::CrankNicolson,
            rannacher_steps: 0,
            levels: LevelOutput::Final,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterSpec {
    pub x: Vec<f64>,
    pub t: f64,
}

/// Solves `u` and `v`, forms `v/u` and estimates its boundary exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackExponent {
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub u_data: DataSpec,
    pub v_data: DataSpec,
    pub rannacher_steps: usize,
    /// Nodes closer than `margin·h` to the boundary are left out of `v/u`.
    pub margin: f64,
    pub center: CenterSpec,
    pub k: u32,
    pub radii: Vec<f64>,
}

impl Default for HarnackExponent {
    fn default() -> Self {
        Self {
            domain: DomainSpec { radius: 0.5, t_start: -0.25, ..DomainSpec::default() },
            grid: GridSpec { h: 1.0 / 128.0, tau: 1.0 / 512.0 },
            u_data: DataSpec::GraphDistance { weights: [1.0, 0.0, 0.0, 0.0] },
            v_data: DataSpec::GraphDistance { weights: [1.0, 1.0, 1.0, 1.0] },
            rannacher_steps: 2,
            margin: 2.0,
            center: CenterSpec { x: vec![0.0, 0.0], t: 0.0 },
            k: 1,
            radii: vec![0.4, 0.3, 0.22, 0.16, 0.12, 0.09, 0.0625],
        }
    }
}

/// Flatness iteration on the exact pair `u = x`, `v = x³ + 6xt` sampled on
/// the half-line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Iterate {
    pub grid: GridSpec,
    pub k: u32,
    pub alpha: f64,
    pub rho: f64,
    pub r0: f64,
    pub steps: usize,
    /// Scale `v` so that the hypothesis holds at `r0`.
    pub normalize: bool,
}

impl Default for Iterate {
    fn default() -> Self {
        Self {
            grid: GridSpec { h: 1.0 / 256.0, tau: 1.0 / 4096.0 },
            k: 2,
            alpha: 0.5,
            rho: 0.5,
            r0: 0.5,
            steps: 5,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counterexample {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub variant: Variant,
    pub probe: ProbePath,
    /// Probe times `2^{−j}` for `j` in `j_min..=j_max`.
    pub j_min: i32,
    pub j_max: i32,
    pub cutoff_width: f64,
    pub grid: GridSpec,
    pub rannacher_steps: usize,
}

impl Default for Counterexample {
    fn default() -> Self {
        Self {
            dim: 1,
            alpha: 1.0,
            beta: 0.5,
            variant: Variant::Base,
            probe: ProbePath::BoundaryOffset { distance: 1.0 / 32.0 },
            j_min: 3,
            j_max: 10,
            cutoff_width: 0.5,
            grid: GridSpec { h: 2f64.powi(-9), tau: 2f64.powi(-14) },
            rannacher_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingCheck {
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub data: DataSpec,
    pub center: CenterSpec,
    pub r0: Vec<f64>,
    pub alpha: f64,
    pub rho: f64,
    pub margin: f64,
}

impl Default for ScalingCheck {
    fn default() -> Self {
        Self {
            domain: DomainSpec::default(),
            grid: GridSpec { h: 1.0 / 64.0, tau: 1.0 / 64.0 },
            data: DataSpec::GraphDistance { weights: [1.0, 0.5, 0.0, 0.3] },
            center: CenterSpec { x: vec![0.1, 0.5], t: 0.0 },
            r0: vec![0.5, 0.25],
            alpha: 0.5,
            rho: 0.5,
            margin: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObstacleCase {
    Flat,
    Sine { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleDemo {
    pub case: ObstacleCase,
    pub h_values: Vec<f64>,
    pub x1_range: [f64; 2],
    pub t: f64,
}

impl Default for ObstacleDemo {
    fn default() -> Self {
        Self {
            case: ObstacleCase::Sine { amplitude: 0.05 },
            h_values: vec![0.125, 0.0625, 0.03125],
            x1_range: [-0.5, 0.5],
            t: 0.3,
        }
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::VerifyApprox(_) => "verify-approx",
            Self::CaloricBasis(_) => "caloric-basis",
            Self::Solve(_) => "solve",
            Self::HarnackExponent(_) => "harnack-exponent",
            Self::Iterate(_) => "iterate",
            Self::Counterexample(_) => "counterexample",
            Self::ScalingCheck(_) => "scaling-check",
            Self::ObstacleDemo(_) => "obstacle-demo",
        }
    }

    pub fn default_for(kind: &str) -> Option<Self> {
        Some(match kind {
            "verify-approx" => Self::VerifyApprox(Default::default()),
            "caloric-basis" => Self::CaloricBasis(Default::default()),
            "solve" => Self::Solve(Default::default()),
            "harnack-exponent" => Self::HarnackExponent(Default::default()),
            "iterate" => Self::Iterate(Default::default()),
            "counterexample" => Self::Counterexample(Default::default()),
            "scaling-check" => Self::ScalingCheck(Default::default()),
            "obstacle-demo" => Self::ObstacleDemo(Default::default()),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Overrides the seed where the experiment has one.
    pub fn set_seed(&mut self, seed: u64) {
        if let Self::VerifyApprox(c) = self {
            c.seed = seed;
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::VerifyApprox(c) => Some(c.seed),
            _ => None,
        }
    }

    /// Field-level range checks; empty when the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        match self {
            Self::VerifyApprox(c) => {
                if !(1..=3).contains(&c.n) {
                    e.push(format!("n: must lie in 1..=3, got {}", c.n));
                }
                if !(1..=6).contains(&c.k) {
                    e.push(format!("k: must lie in 1..=6, got {}", c.k));
                }
                if !(1..=10_000).contains(&c.instances) {
                    e.push("instances: must lie in 1..=10000".into());
                }
            }
            Self::CaloricBasis(c) => {
                if !(1..=4).contains(&c.n) {
                    e.push(format!("n: must lie in 1..=4, got {}", c.n));
                }
                if c.k > 12 {
                    e.push(format!("k: must be at most 12, got {}", c.k));
                }
            }
            Self::Solve(c) => {
                c.domain.check("domain", &mut e);
                c.grid.check("grid", &mut e);
            }
            Self::HarnackExponent(c) => {
                c.domain.check("domain", &mut e);
                c.grid.check("grid", &mut e);
                if c.center.x.len() != c.domain.dim {
                    e.push(format!("center.x: needs {} entries", c.domain.dim));
                }
                if !(1..=4).contains(&c.k) {
                    e.push(format!("k: must lie in 1..=4, got {}", c.k));
                }
                if c.radii.len() < 3 || c.radii.windows(2).any(|w| w[1] >= w[0]) || c.radii.iter().any(|&r| !(r > 0.0))
                {
                    e.push("radii: need at least 3 positive, strictly decreasing values".into());
                }
                if !(c.margin >= 0.0) {
                    e.push("margin: must be non-negative".into());
                }
            }
            Self::Iterate(c) => {
                c.grid.check("grid", &mut e);
                if !(1..=4).contains(&c.k) {
                    e.push(format!("k: must lie in 1..=4, got {}", c.k));
                }
                if !unit_open(c.alpha) {
                    e.push("alpha: must lie in (0, 1)".into());
                }
                if !unit_open(c.rho) {
                    e.push("rho: must lie in (0, 1)".into());
                }
                if !(c.r0 > 0.0 && c.r0 <= 1.0) {
                    e.push("r0: must lie in (0, 1]".into());
                }
                if c.steps == 0 || c.steps > 64 {
                    e.push("steps: must lie in 1..=64".into());
                }
            }
            Self::Counterexample(c) => {
                c.grid.check("grid", &mut e);
                if !(1..=2).contains(&c.dim) {
                    e.push(format!("dim: must be 1 or 2, got {}", c.dim));
                }
                if !(c.beta > 0.0 && c.beta <= c.alpha && c.alpha <= 1.0) {
                    e.push("alpha, beta: need 0 < beta <= alpha <= 1".into());
                }
                if !(c.j_min >= 0 && c.j_max > c.j_min && c.j_max <= 30) {
                    e.push("j_min, j_max: need 0 <= j_min < j_max <= 30".into());
                }
            }
            Self::ScalingCheck(c) => {
                c.domain.check("domain", &mut e);
                c.grid.check("grid", &mut e);
                if c.center.x.len() != c.domain.dim {
                    e.push(format!("center.x: needs {} entries", c.domain.dim));
                }
                if c.r0.is_empty() || c.r0.iter().any(|&r| !unit_open(r)) {
                    e.push("r0: need values in (0, 1)".into());
                }
                if !(c.alpha > 0.0 && c.alpha <= 1.0) {
                    e.push("alpha: must lie in (0, 1]".into());
                }
                if !(c.rho > 0.0) {
                    e.push("rho: must be positive".into());
                }
            }
            Self::ObstacleDemo(c) => {
                if c.h_values.len() < 2
                    || c.h_values.windows(2).any(|w| w[1] >= w[0])
                    || c.h_values.iter().any(|&h| !(h > 0.0))
                {
                    e.push("h_values: need at least two positive, decreasing values".into());
                }
                if !(c.x1_range[1] > c.x1_range[0]) {
                    e.push("x1_range: must be increasing".into());
                }
                if let ObstacleCase::Sine { amplitude } = c.case {
                    if !(amplitude.abs() <= 0.5) {
                        e.push("case.amplitude: must be at most 0.5 in magnitude".into());
                    }
                }
            }
        }
        e
    }
}
