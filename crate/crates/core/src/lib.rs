//! Boundary Harnack tooling for parabolic equations in graph domains.
//!
//! Exact parabolic polynomials and the approximating-polynomial solver live
//! in [`parpoly`] and [`approx`]; the numerical side (finite-difference heat
//! solver, quotient regularity diagnostics, blow-up experiment) in the
//! remaining modules.

// NaN-rejecting `!(a > b)` checks are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
pub mod counterex;
pub mod heatlab;
pub mod obstacle;
pub mod parpoly;
pub mod regularity;

pub use approx::{
    build_source_map, build_vc_source_map, caloric_basis, expand_source, solve_approximating, ApproxError, SourceMap,
    UModel, VcModel,
};
pub use counterex::{kernel_quadrature_oracle, run_blowup, BlowupExperiment, BlowupResult};
pub use heatlab::{solve_heat, solve_vc, GraphDomain, Grid, GridField, SolveOptions};
pub use obstacle::{obstacle_demo, ManufacturedCase, ObstacleDemo, ObstacleReport};
pub use parpoly::{FloatPoly, ParIndex, ParPoly, ParPolyError, Rational};
pub use regularity::{
    ds_iteration, fit_parpoly, holder_exponent, quotient_field, scaling_seminorm_check, HolderReport,
};

/// Crate version, recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
