//! Explicit conservative finite-volume scheme for
//! `du/dt = div((b/a) grad (u/b)^m) + (u/a) Phi(x, t, p(u))`.
//!
//! Face fluxes are `(b/a)_face * ((u/b)^m_right - (u/b)^m_left) / h` with the
//! arithmetic mean of the neighbouring `b/a`. Coefficients are frozen at the
//! start of each step. Under the step restriction of [`stable_dt`] the update is
//! monotone, so ordered initial data stay ordered.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::expr::Expr;
use crate::grid::{fmt17, weighted_laplacian, Field, Grid};
use crate::model::{CoefficientSource, DerivedCoefficients, ModelError, ProblemSpec, GUARD_CELLS};

/// Density below which a cell counts as empty when measuring the support.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Soft tolerance on `sup p <= p_M (1 + tol)`.
pub const CEILING_TOL: f64 = 0.05;
/// Per-step clamped mass, relative to total mass, above which a run is flagged.
pub const CLAMP_TOL: f64 = 1e-12;
/// Upper bound on `dt sup|Phi| / inf a`.
pub const REACTION_CAP: f64 = 0.1;
/// Target number of rows kept in the step log.
pub const STEP_LOG_ROWS: usize = 4096;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("support reached the guard band at t={t} (cell {cell}, u={value:e})")]
    SupportAtBoundary { t: f64, cell: usize, value: f64 },
    #[error("non-finite density at t={t} in cell {cell}")]
    NonFinite { t: f64, cell: usize },
    #[error("step limit of {0} reached before the final time")]
    MaxSteps(usize),
    #[error("initial data are not ordered: u_low > u_high in cell {0}")]
    Unordered(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub m: f64,
}

/// One row of the step log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub sup_p: f64,
    pub support_radius: f64,
    /// Largest clamped mass over the steps folded into this row.
    pub clamped_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub m: f64,
    /// Snapshots at `j T / snapshots`, `j = 0..=snapshots` (only `t = 0` when `T = 0`).
    pub snapshots: Vec<State>,
    /// Step log, thinned to about [`STEP_LOG_ROWS`] rows.
    pub steps: Vec<StepRecord>,
    pub step_count: usize,
    /// Largest `sup p` over every step.
    pub sup_p: f64,
    /// Largest per-step clamped mass relative to total mass.
    pub max_clamped_fraction: f64,
    pub epsilon_lift: f64,
    pub p_max: f64,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        self.snapshots[0].u.grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Snapshot spacings.
    pub fn dts(&self) -> Vec<f64> {
        self.snapshots.windows(2).map(|w| w[1].t - w[0].t).collect()
    }

    pub fn final_state(&self) -> &State {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }

    /// `sup p` exceeded `p_M (1 + CEILING_TOL)` at some step.
    pub fn ceiling_violated(&self) -> bool {
        self.sup_p > self.p_max * (1.0 + CEILING_TOL)
    }

    /// `steps.csv`: `t,dt,mass,sup_p,support_radius,clamped_mass`.
    pub fn write_steps_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,dt,mass,sup_p,support_radius,clamped_mass")?;
        for r in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt17(r.t),
                fmt17(r.dt),
                fmt17(r.mass),
                fmt17(r.sup_p),
                fmt17(r.support_radius),
                fmt17(r.clamped_mass)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub cfl: f64,
    pub snapshots: usize,
    pub max_steps: usize,
    /// Replaces `Phi` (e.g. by `0` for source-free validation runs).
    pub phi_override: Option<Expr>,
}

impl SolverOptions {
    pub fn from_spec(spec: &ProblemSpec) -> Self {
        SolverOptions { cfl: spec.cfl, snapshots: spec.snapshots, max_steps: 50_000_000, phi_override: None }
    }
}

// Per-cell quantities shared by the time-step restriction and the update.
struct Prepared {
    /// `(u/b)^m`
    vm: Field,
    /// `(u/a) Phi(x, t, p(u))`
    source: Vec<f64>,
    max_diffusivity: f64,
    max_phi: f64,
    sup_p: f64,
}

fn prepare(state: &State, c: &DerivedCoefficients) -> Result<Prepared, SolverError> {
    let m = state.m;
    let u = state.u.values();
    let a = c.a.values();
    let b = c.b.values();
    let scale = m / (m - 1.0);
    let mut vm = Vec::with_capacity(u.len());
    let mut source = Vec::with_capacity(u.len());
    let (mut max_diff, mut max_phi, mut sup_p) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..u.len() {
        let v = u[k] / b[k];
        // v^(m-1) and v^m from one powf.
        let (vm1, vmk) = if v > 0.0 {
            let vm1 = v.powf(m - 1.0);
            (vm1, vm1 * v)
        } else {
            (0.0, 0.0)
        };
        let p = scale * vm1;
        let phi = c.phi(k, p)?;
        vm.push(vmk);
        source.push(u[k] / a[k] * phi);
        max_diff = max_diff.max(m * vm1 / a[k]);
        max_phi = max_phi.max(phi.abs());
        sup_p = sup_p.max(p);
    }
    Ok(Prepared {
        vm: Field::from_vec(*state.u.grid(), vm),
        source,
        max_diffusivity: max_diff,
        max_phi,
        sup_p,
    })
}

fn dt_from(prep: &Prepared, state: &State, c: &DerivedCoefficients, cfl: f64) -> f64 {
    let g = state.u.grid();
    let h2 = g.h() * g.h();
    let two_d = 2.0 * g.dim() as f64;
    let inf_a = c.inf_a();
    let mut dt = if prep.max_diffusivity > 0.0 {
        cfl * h2 / (two_d * prep.max_diffusivity)
    } else {
        cfl * h2 * inf_a / (two_d * state.m)
    };
    if prep.max_phi > 0.0 {
        dt = dt.min(REACTION_CAP * inf_a / prep.max_phi);
    }
    dt
}

/// Largest stable step: `cfl h^2 / (2d max m v^(m-1)/a)`, capped so that
/// `dt sup|Phi| / inf a <= 0.1`.
pub fn stable_dt(state: &State, coeffs: &DerivedCoefficients, cfl: f64) -> Result<f64, SolverError> {
    let prep = prepare(state, coeffs)?;
    Ok(dt_from(&prep, state, coeffs, cfl))
}

/// Result of one explicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    /// Mass removed by clamping negative densities to zero.
    pub clamped_mass: f64,
    /// `sup p` at the start of the step.
    pub sup_p: f64,
}

fn apply(state: &State, c: &DerivedCoefficients, prep: &Prepared, dt: f64) -> Result<StepOutcome, SolverError> {
    let div = weighted_laplacian(&c.b_over_a, &prep.vm);
    let vol = state.u.grid().cell_volume();
    let mut clamped = 0.0;
    let mut out = Vec::with_capacity(prep.source.len());
    for (k, (&u, (&d, &s))) in state.u.values().iter().zip(div.values().iter().zip(&prep.source)).enumerate() {
        let mut nu = u + dt * (d + s);
        if !nu.is_finite() {
            return Err(SolverError::NonFinite { t: state.t + dt, cell: k });
        }
        if nu < 0.0 {
            clamped -= nu * vol;
            nu = 0.0;
        }
        out.push(nu);
    }
    Ok(StepOutcome {
        state: State { t: state.t + dt, u: Field::from_vec(*state.u.grid(), out), m: state.m },
        clamped_mass: clamped,
        sup_p: prep.sup_p,
    })
}

/// One explicit step of length `dt` with coefficients frozen at `state.t`.
pub fn step(state: &State, coeffs: &DerivedCoefficients, dt: f64) -> Result<StepOutcome, SolverError> {
    let prep = prepare(state, coeffs)?;
    apply(state, coeffs, &prep, dt)
}

/// Largest `|x|` over cells with density above `threshold` (0 if none).
pub fn support_radius(u: &Field, threshold: f64) -> f64 {
    let g = u.grid();
    u.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(k, _)| g.radius(k))
        .fold(0.0, f64::max)
}

fn check_guard(u: &Field, threshold: f64, t: f64) -> Result<(), SolverError> {
    let g = u.grid();
    for (k, &v) in u.values().iter().enumerate() {
        if v > threshold && g.cells_to_edge(k) < GUARD_CELLS {
            return Err(SolverError::SupportAtBoundary { t, cell: k, value: v });
        }
    }
    Ok(())
}

/// Density level separating the support from the lifted background.
///
/// Without lift this is [`SUPPORT_TOL`]. With `epsilon_lift > 0` the background
/// grows at most like `eps exp(t sup Phi(., 0)/inf a)`, and the threshold
/// sits above that.
pub fn support_threshold(epsilon_lift: f64, background_rate: f64, t: f64) -> f64 {
    if epsilon_lift == 0.0 {
        SUPPORT_TOL
    } else {
        SUPPORT_TOL + 2.0 * epsilon_lift * (background_rate.max(0.0) * t).exp()
    }
}

fn background_rate(c: &DerivedCoefficients) -> Result<f64, SolverError> {
    let mut rate = 0.0f64;
    for k in 0..c.grid().len() {
        rate = rate.max(c.phi(k, 0.0)? / c.a.values()[k]);
    }
    Ok(rate)
}

fn snapshot_times(horizon: f64, snapshots: usize) -> Vec<f64> {
    if horizon == 0.0 {
        return vec![0.0];
    }
    (0..=snapshots).map(|j| horizon * j as f64 / snapshots as f64).collect()
}

/// Runs `spec` at stiffness `m` from its own initial data (plus lift).
pub fn simulate(spec: &ProblemSpec, m: f64) -> Result<Trajectory, SolverError> {
    let grid = spec.grid()?;
    let u0 = spec.initial_density(&grid)?;
    simulate_from(spec, m, u0, &SolverOptions::from_spec(spec))
}

/// Runs from explicit initial density `u0` (lift is not added again).
pub fn simulate_from(spec: &ProblemSpec, m: f64, u0: Field, opts: &SolverOptions) -> Result<Trajectory, SolverError> {
    spec.validate()?;
    let grid = *u0.grid();
    let coeffs = CoefficientSource::with_phi(Arc::new(spec.clone()), grid, opts.phi_override.clone())?;
    let c0 = coeffs.at(0.0)?;
    let rate = background_rate(&c0)?;
    let threshold = |t: f64| support_threshold(spec.epsilon_lift, rate, t);
    if let Some(k) = u0.first_non_finite() {
        return Err(SolverError::NonFinite { t: 0.0, cell: k });
    }
    check_guard(&u0, threshold(0.0), 0.0)?;

    let times = snapshot_times(spec.horizon, opts.snapshots);
    let log_every = spec.horizon / STEP_LOG_ROWS as f64;
    let mut state = State { t: 0.0, u: u0, m };
    let mut traj = Trajectory {
        m,
        snapshots: vec![state.clone()],
        steps: Vec::new(),
        step_count: 0,
        sup_p: 0.0,
        max_clamped_fraction: 0.0,
        epsilon_lift: spec.epsilon_lift,
        p_max: spec.p_max,
    };
    let mut next_log = 0.0;
    let mut clamped_since_log = 0.0f64;

    for &target in &times[1..] {
        while state.t < target {
            if traj.step_count >= opts.max_steps {
                return Err(SolverError::MaxSteps(opts.max_steps));
            }
            let c = coeffs.at(state.t)?;
            let prep = prepare(&state, &c)?;
            traj.sup_p = traj.sup_p.max(prep.sup_p);
            let mut dt = dt_from(&prep, &state, &c, opts.cfl);
            let land = target - state.t <= dt * (1.0 + 1e-9);
            if land {
                dt = target - state.t;
            }
            let mass_before = state.u.integral();
            let out = apply(&state, &c, &prep, dt)?;
            state = out.state;
            if land {
                state.t = target;
            }
            traj.step_count += 1;
            if mass_before > 0.0 {
                traj.max_clamped_fraction = traj.max_clamped_fraction.max(out.clamped_mass / mass_before);
            }
            clamped_since_log = clamped_since_log.max(out.clamped_mass);
            check_guard(&state.u, threshold(state.t), state.t)?;
            if state.t >= next_log || land && target == spec.horizon {
                traj.steps.push(StepRecord {
                    t: state.t,
                    dt,
                    mass: state.u.integral(),
                    sup_p: out.sup_p,
                    support_radius: support_radius(&state.u, threshold(state.t)),
                    clamped_mass: clamped_since_log,
                });
                clamped_since_log = 0.0;
                while next_log <= state.t {
                    next_log += log_every;
                }
            }
        }
        traj.snapshots.push(state.clone());
    }
    // sup p of the final state, which no step has prepared.
    let c = coeffs.at(state.t)?;
    traj.sup_p = traj.sup_p.max(prepare(&state, &c)?.sup_p);
    Ok(traj)
}

/// Pair of runs from ordered initial data, advanced in lockstep.
#[derive(Debug, Clone)]
pub struct ComparisonOutcome {
    pub low: Trajectory,
    pub high: Trajectory,
    /// `max_t max_x (u_low - u_high)_+` over every step.
    pub violation: f64,
}

/// Runs `u0_low <= u0_high` with common time steps and reports the largest
/// violation of the ordering.
pub fn comparison_pair(
    spec: &ProblemSpec,
    m: f64,
    u0_low: Field,
    u0_high: Field,
    opts: &SolverOptions,
) -> Result<ComparisonOutcome, SolverError> {
    spec.validate()?;
    if let Some(k) = u0_low.values().iter().zip(u0_high.values()).position(|(l, h)| l > h) {
        return Err(SolverError::Unordered(k));
    }
    let grid = *u0_low.grid();
    let coeffs = CoefficientSource::with_phi(Arc::new(spec.clone()), grid, opts.phi_override.clone())?;
    let times = snapshot_times(spec.horizon, opts.snapshots);
    let mut low = State { t: 0.0, u: u0_low, m };
    let mut high = State { t: 0.0, u: u0_high, m };
    let mk = |s: &State| Trajectory {
        m,
        snapshots: vec![s.clone()],
        steps: Vec::new(),
        step_count: 0,
        sup_p: 0.0,
        max_clamped_fraction: 0.0,
        epsilon_lift: spec.epsilon_lift,
        p_max: spec.p_max,
    };
    let (mut tl, mut th) = (mk(&low), mk(&high));
    let mut violation = 0.0f64;
    for &target in &times[1..] {
        while low.t < target {
            if tl.step_count >= opts.max_steps {
                return Err(SolverError::MaxSteps(opts.max_steps));
            }
            let c = coeffs.at(low.t)?;
            let pl = prepare(&low, &c)?;
            let ph = prepare(&high, &c)?;
            let mut dt = dt_from(&pl, &low, &c, opts.cfl).min(dt_from(&ph, &high, &c, opts.cfl));
            let land = target - low.t <= dt * (1.0 + 1e-9);
            if land {
                dt = target - low.t;
            }
            tl.sup_p = tl.sup_p.max(pl.sup_p);
            th.sup_p = th.sup_p.max(ph.sup_p);
            low = apply(&low, &c, &pl, dt)?.state;
            high = apply(&high, &c, &ph, dt)?.state;
            if land {
                low.t = target;
                high.t = target;
            }
            tl.step_count += 1;
            th.step_count += 1;
            for (l, h) in low.u.values().iter().zip(high.u.values()) {
                violation = violation.max(l - h);
            }
        }
        tl.snapshots.push(low.clone());
        th.snapshots.push(high.clone());
    }
    Ok(ComparisonOutcome { low: tl, high: th, violation })
}
