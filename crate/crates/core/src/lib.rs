//! Numerical laboratory for the heterogeneous porous medium equation with
//! reaction,
//!
//! ```text
//! du/dt = div((u/a) grad p) + (u/a) Phi(x, t, p),   p = m/(m-1) (u/b)^(m-1),
//! ```
//!
//! and its stiff-pressure (`m -> infinity`) limit.
//!
//! * [`expr`]: expression language for `a`, `b`, `Phi` and initial data.
//! * [`model`]: problem data, constitutive law, derived coefficients and the assumption checker.
//! * [`grid`]: uniform grids, fields, discrete operators and space-time norms.
//! * [`solver`]: explicit conservative finite-volume time stepping.
//! * [`diagnostics`]: pressure-side quantities, estimate norms and front kinematics.
//! * [`oracle`]: closed-form and shooting references for the limit problem, m-sweeps.
//! * [`cli`]: configuration files, orchestration and CSV outputs.

pub mod expr;
pub mod grid;
pub mod model;
pub mod diagnostics;
pub mod solver;
pub mod oracle;
pub mod cli;
