//! Reference solutions of the limit problem in 1D, and the m-sweep harness.
//!
//! With constant `a`, `b` and `Phi = lambda (p_M - p)`, the saturated pressure
//! on `(-R, R)` solves `p'' = -lambda (p_M - p)`, `p(+-R) = 0`, whose solution
//! is `p_M (1 - cosh(sqrt(lambda) x) / cosh(sqrt(lambda) R))`. The front then
//! moves with `R' = |p'(R)| / a = p_M sqrt(lambda) tanh(sqrt(lambda) R) / a`.
//! The shooting solver below is an independent route to the same profile.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{pressure_field, FrontSample};
use crate::expr::{Env, Var};
use crate::grid::{self, fmt17, lp_integral, Field};
use crate::model::{CoefficientSource, ModelError, ProblemSpec};
use crate::solver::{simulate, SolverError, Trajectory};

/// RK4 steps across `[0, R]` in the shooting solver.
pub const SHOOTING_STEPS: usize = 4096;
/// Target `|p(R)|` for the shooting bisection.
pub const SHOOTING_TOL: f64 = 1e-10;
/// RK4 steps over `[0, T]` in the front ODE.
pub const FRONT_ODE_STEPS: usize = 4096;
/// Start of the front comparison window; finite-m runs first have to saturate.
pub const TRANSIENT: f64 = 0.2;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle parameters: {0}")]
    Invalid(String),
    #[error("shooting interval [{lo}, {hi}] does not bracket p(R) = 0 (values {f_lo:e}, {f_hi:e})")]
    NotBracketing { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("{0}")]
    Mismatch(String),
    #[error("oracle unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
}

/// Linear growth term `Phi = lambda (p_M - p)` with constant coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGrowth {
    pub lambda: f64,
    pub p_max: f64,
    pub a: f64,
    pub b: f64,
}

impl LinearGrowth {
    pub fn phi(&self, p: f64) -> f64 {
        self.lambda * (self.p_max - p)
    }

    /// Closed-form saturated pressure on `(-r, r)`.
    pub fn closed_form(&self, r: f64, x: f64) -> f64 {
        let k = self.lambda.sqrt();
        self.p_max * (1.0 - (k * x).cosh() / (k * r).cosh())
    }

    /// Closed-form `|p'(R)|`.
    pub fn edge_slope(&self, r: f64) -> f64 {
        let k = self.lambda.sqrt();
        self.p_max * k * (k * r).tanh()
    }

    /// Front speed `|p'(R)| / a`.
    pub fn front_speed(&self, r: f64) -> f64 {
        self.edge_slope(r) / self.a
    }
}

impl LinearGrowth {
    /// Extracts constant `a`, `b` and an affine `Phi = lambda (p_M - p)` from a
    /// 1D problem; anything else is unsupported.
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self, OracleError> {
        if spec.dim != 1 {
            return Err(OracleError::Unsupported(format!("dim = {} (1D only)", spec.dim)));
        }
        let constant = |name: &str, e: &crate::expr::Expr| -> Result<f64, OracleError> {
            if !e.is_constant() {
                return Err(OracleError::Unsupported(format!("{name} = {e} is not constant")));
            }
            e.evaluate(&Env::default()).map_err(|err| OracleError::Invalid(format!("{name}: {err}")))
        };
        let a = constant("a", &spec.a)?;
        let b = constant("b", &spec.b)?;
        let phi = &spec.phi;
        if [Var::X, Var::Y, Var::T].iter().any(|&v| phi.depends_on(v)) {
            return Err(OracleError::Unsupported(format!("phi = {phi} depends on space or time")));
        }
        let eval = |p: f64| {
            phi.evaluate(&Env::default().with_p(p)).map_err(|err| OracleError::Invalid(format!("phi: {err}")))
        };
        let p_max = spec.p_max;
        let lambda = eval(0.0)? / p_max;
        for k in 0..=8 {
            let p = p_max * k as f64 / 4.0;
            let affine = lambda * (p_max - p);
            if (eval(p)? - affine).abs() > 1e-9 * (1.0 + affine.abs()) {
                return Err(OracleError::Unsupported(format!("phi = {phi} is not lambda (p_M - p)")));
            }
        }
        let params = LinearGrowth { lambda, p_max, a, b };
        if !(lambda > 0.0 && a > 0.0 && b > 0.0) {
            return Err(OracleError::Invalid(format!("parameters must be positive: {params:?}")));
        }
        Ok(params)
    }
}

/// Edge of the support of `u0` on the positive x axis, by bisection between
/// the last sampled positive point and the first zero beyond it.
pub fn initial_support_edge(spec: &ProblemSpec) -> Result<f64, OracleError> {
    let u0 = |x: f64| {
        spec.u0.evaluate(&Env::point(x, None, 0.0)).map_err(|err| OracleError::Invalid(format!("u0: {err}")))
    };
    let samples = 16 * spec.n;
    let l = spec.half_width;
    let mut last = None;
    for i in 0..=samples {
        let x = l * i as f64 / samples as f64;
        if u0(x)? > 0.0 {
            last = Some(i);
        }
    }
    let i = last.ok_or_else(|| OracleError::Invalid("u0 vanishes on the positive axis".into()))?;
    if i == samples {
        return Err(OracleError::Invalid("u0 is positive up to the boundary".into()));
    }
    let (mut lo, mut hi) = (l * i as f64 / samples as f64, l * (i + 1) as f64 / samples as f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if u0(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Largest relative deviation of the measured front position from the front
/// ODE restarted at the first sample with `t >= TRANSIENT`, over the rest of
/// the run. `None` when no sample lies in the window.
pub fn front_position_error(front: &[FrontSample], params: LinearGrowth) -> Result<Option<f64>, OracleError> {
    let window: Vec<&FrontSample> = front.iter().filter(|f| f.t >= TRANSIENT * (1.0 - 1e-12)).collect();
    let Some(start) = window.first() else { return Ok(None) };
    let end = window.last().map_or(start.t, |f| f.t);
    let ode = front_ode(start.r, params, end - start.t, SlopeSource::ClosedForm)?;
    let mut worst = 0.0f64;
    for f in &window {
        let r = interpolate(&ode, (f.t - start.t).min(end - start.t)).unwrap_or(start.r);
        worst = worst.max((f.r - r).abs() / r);
    }
    Ok(Some(worst))
}

#[derive(Debug, Clone)]
pub struct SaturatedProfile {
    pub half_width: f64,
    /// Sample points `x_i = i R / SHOOTING_STEPS` on `[0, R]`.
    pub x: Vec<f64>,
    /// Shooting solution.
    pub p: Vec<f64>,
    /// Closed-form solution at the same points.
    pub p_closed: Vec<f64>,
    /// `p'(R)` from the shooting solution.
    pub edge_slope: f64,
    pub params: LinearGrowth,
}

impl SaturatedProfile {
    pub fn center_value(&self) -> f64 {
        self.p[0]
    }

    pub fn max_closed_form_difference(&self) -> f64 {
        self.p.iter().zip(&self.p_closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `oracle_profile.csv`: `x,p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,p")?;
        for (x, p) in self.x.iter().zip(&self.p) {
            writeln!(out, "{},{}", fmt17(*x), fmt17(*p))?;
        }
        Ok(())
    }
}

// RK4 for p'' = -Phi(p) from (p, p') = (center, 0); `visit` sees every node.
fn shoot(params: &LinearGrowth, center: f64, r: f64, mut visit: impl FnMut(f64, f64)) -> (f64, f64) {
    let n = SHOOTING_STEPS;
    let h = r / n as f64;
    let rhs = |y: f64, z: f64| (z, -params.phi(y));
    let (mut y, mut z) = (center, 0.0);
    visit(0.0, y);
    for i in 0..n {
        let (k1y, k1z) = rhs(y, z);
        let (k2y, k2z) = rhs(y + 0.5 * h * k1y, z + 0.5 * h * k1z);
        let (k3y, k3z) = rhs(y + 0.5 * h * k2y, z + 0.5 * h * k2z);
        let (k4y, k4z) = rhs(y + h * k3y, z + h * k3z);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        visit((i + 1) as f64 * h, y);
    }
    (y, z)
}

/// Saturated pressure on `(-R, R)` by shooting on `p(0)` with `p'(0) = 0`.
pub fn saturated_profile(r: f64, params: LinearGrowth) -> Result<SaturatedProfile, OracleError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(OracleError::Invalid(format!("half-width must be positive, got {r}")));
    }
    if !(params.lambda > 0.0 && params.p_max > 0.0 && params.a > 0.0 && params.b > 0.0) {
        return Err(OracleError::Invalid(format!("parameters must be positive: {params:?}")));
    }
    let edge = |c: f64| shoot(&params, c, r, |_, _| {}).0;
    let (mut lo, mut hi) = (0.0, params.p_max);
    let (f_lo, f_hi) = (edge(lo), edge(hi));
    if f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return Err(OracleError::NotBracketing { lo, hi, f_lo, f_hi });
    }
    let mut center = 0.5 * (lo + hi);
    for _ in 0..200 {
        center = 0.5 * (lo + hi);
        let f = edge(center);
        if f.abs() <= SHOOTING_TOL {
            break;
        }
        if (f < 0.0) == (f_lo < 0.0) {
            lo = center;
        } else {
            hi = center;
        }
        if hi - lo <= f64::EPSILON * params.p_max {
            break;
        }
    }
    let (mut x, mut p) = (Vec::with_capacity(SHOOTING_STEPS + 1), Vec::with_capacity(SHOOTING_STEPS + 1));
    let (end, slope) = shoot(&params, center, r, |xi, pi| {
        x.push(xi);
        p.push(pi);
    });
    if end.abs() > SHOOTING_TOL {
        return Err(OracleError::Mismatch(format!("shooting did not reach |p(R)| <= {SHOOTING_TOL:e}: {end:e}")));
    }
    let p_closed = x.iter().map(|&xi| params.closed_form(r, xi)).collect();
    Ok(SaturatedProfile { half_width: r, x, p, p_closed, edge_slope: slope, params })
}

/// Source of `|p'(R)|` for the front ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeSource {
    ClosedForm,
    Shooting,
}

/// `R(t)` from `R' = |p'(R)| / a` by RK4 with `FRONT_ODE_STEPS` steps over `[0, T]`.
pub fn front_ode(r0: f64, params: LinearGrowth, horizon: f64, slope: SlopeSource) -> Result<Vec<(f64, f64)>, OracleError> {
    if !(r0 > 0.0) {
        return Err(OracleError::Invalid(format!("R0 must be positive, got {r0}")));
    }
    if horizon == 0.0 {
        return Ok(vec![(0.0, r0)]);
    }
    let speed = |r: f64| -> Result<f64, OracleError> {
        Ok(match slope {
            SlopeSource::ClosedForm => params.front_speed(r),
            SlopeSource::Shooting => saturated_profile(r, params)?.edge_slope.abs() / params.a,
        })
    };
    let n = FRONT_ODE_STEPS;
    let h = horizon / n as f64;
    let mut r = r0;
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.0, r));
    for i in 0..n {
        let k1 = speed(r)?;
        let k2 = speed(r + 0.5 * h * k1)?;
        let k3 = speed(r + 0.5 * h * k2)?;
        let k4 = speed(r + h * k3)?;
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((i + 1) as f64 * h, r));
    }
    Ok(out)
}

/// Linear interpolation in a monotone-in-`t` series.
pub fn interpolate(series: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = series.first()?;
    if t < first.0 {
        return None;
    }
    for w in series.windows(2) {
        let ((t0, r0), (t1, r1)) = (w[0], w[1]);
        if t >= t0 && t <= t1 {
            return Some(if t1 == t0 { r0 } else { r0 + (r1 - r0) * (t - t0) / (t1 - t0) });
        }
    }
    (series.len() == 1 && t == first.0).then_some(first.1)
}

/// `oracle_front.csv`: `t,R`.
pub fn write_front_csv<W: Write>(series: &[(f64, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "t,R")?;
    for (t, r) in series {
        writeln!(out, "{},{}", fmt17(*t), fmt17(*r))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyRow {
    pub m_low: f64,
    pub m_high: f64,
    pub du_l1: f64,
    pub dp_l1: f64,
}

#[derive(Debug, Clone)]
pub struct CauchyTable {
    pub rows: Vec<CauchyRow>,
    /// Median of successive `du` quotients (`None` with fewer than two rows).
    pub u_ratio: Option<f64>,
    pub p_ratio: Option<f64>,
}

impl CauchyTable {
    /// `cauchy.csv`: `m_low,m_high,du_L1,dp_L1`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "m_low,m_high,du_L1,dp_L1")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", fmt17(r.m_low), fmt17(r.m_high), fmt17(r.du_l1), fmt17(r.dp_l1))?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn ratios(v: &[f64]) -> Option<f64> {
    median(v.windows(2).map(|w| w[1] / w[0]).collect())
}

/// Pairwise `L1(Q_T)` differences of density and pressure between consecutive runs.
pub fn cauchy_table(runs: &[Trajectory], coeffs: &CoefficientSource) -> Result<CauchyTable, OracleError> {
    let mut rows = Vec::new();
    for pair in runs.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        if lo.grid() != hi.grid() {
            return Err(OracleError::Mismatch(format!("m={} and m={} use different grids", lo.m, hi.m)));
        }
        if lo.times() != hi.times() {
            return Err(OracleError::Mismatch(format!("m={} and m={} have different snapshot times", lo.m, hi.m)));
        }
        let (mut du, mut dp) = (Vec::new(), Vec::new());
        for (a, b) in lo.snapshots.iter().zip(&hi.snapshots) {
            let c = coeffs.at(a.t)?;
            let diff = |x: &Field, y: &Field| lp_integral(&x.zip_map(y, |p, q| p - q), 1);
            du.push(diff(&a.u, &b.u));
            dp.push(diff(&pressure_field(&a.u, &c.b, lo.m), &pressure_field(&b.u, &c.b, hi.m)));
        }
        let (du_l1, dp_l1) = if du.len() < 2 {
            (0.0, 0.0)
        } else {
            let dts = lo.dts();
            (grid::spacetime_accumulate(&du, &dts)?, grid::spacetime_accumulate(&dp, &dts)?)
        };
        rows.push(CauchyRow { m_low: lo.m, m_high: hi.m, du_l1, dp_l1 });
    }
    let u_ratio = ratios(&rows.iter().map(|r| r.du_l1).collect::<Vec<_>>());
    let p_ratio = ratios(&rows.iter().map(|r| r.dp_l1).collect::<Vec<_>>());
    Ok(CauchyTable { rows, u_ratio, p_ratio })
}

/// Runs `spec` for every `m` (in parallel) and tabulates the Cauchy differences.
pub fn m_sweep(spec: &ProblemSpec, m_list: &[f64]) -> Result<(Vec<Trajectory>, CauchyTable), OracleError> {
    let runs = m_list.par_iter().map(|&m| simulate(spec, m)).collect::<Result<Vec<_>, _>>()?;
    let grid = spec.grid()?;
    let coeffs = CoefficientSource::new(std::sync::Arc::new(spec.clone()), grid)?;
    let table = cauchy_table(&runs, &coeffs)?;
    Ok((runs, table))
}
