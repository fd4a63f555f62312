//! Problem data, constitutive law, derived coefficients and the assumption checker.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{self, fd_derivative_with, Env, EvalError, Expr, Var};
use crate::grid::{Field, Grid, GridError};

/// Absolute tolerance used by every assumption check.
pub const CHECK_TOL: f64 = 1e-6;
/// Time slices sampled by the checker.
pub const CHECK_TIME_SLICES: usize = 9;
/// Pressure levels in `[0, p_M]` sampled by the checker.
pub const CHECK_PRESSURE_LEVELS: usize = 9;
/// Largest checker sampling resolution per axis in 2D.
pub const CHECK_MAX_2D_SAMPLES: usize = 256;
/// Rotated points per radius used for the radial-symmetry clause.
pub const RADIAL_ROTATIONS: usize = 16;
/// Cells kept free of mass along each edge of the box.
pub const GUARD_CELLS: usize = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("evaluating {what} at x={x}, y={y:?}, t={t}, p={p:?}: {source}")]
    Eval {
        what: &'static str,
        x: f64,
        y: Option<f64>,
        t: f64,
        p: Option<f64>,
        #[source]
        source: EvalError,
    },
}

impl ModelError {
    fn eval(what: &'static str, env: &Env, source: EvalError) -> Self {
        ModelError::Eval {
            what,
            x: env.x.unwrap_or(f64::NAN),
            y: env.y,
            t: env.t.unwrap_or(f64::NAN),
            p: env.p,
            source,
        }
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    /// Half-width `L` of the box `[-L, L]^d`.
    pub half_width: f64,
    /// Cells per axis.
    pub n: usize,
    /// Time horizon.
    pub horizon: f64,
    pub a: Expr,
    pub b: Expr,
    pub phi: Expr,
    pub u0: Expr,
    /// Decay rate: `d Phi / dp <= -lambda`.
    pub lambda: f64,
    /// Pressure ceiling: `Phi(x, t, p_M) = 0`.
    pub p_max: f64,
    /// Coefficient bound `Lambda`.
    pub coef_bound: f64,
    /// Structural constant of `Delta log(b/a) >= tilde_lambda - lambda`.
    pub tilde_lambda: f64,
    pub m_list: Vec<f64>,
    pub epsilon_lift: f64,
    pub cfl: f64,
    pub snapshots: usize,
}

impl ProblemSpec {
    /// Constant-coefficient problem `a = b = 1`, `Phi = lambda (p_M - p)` in 1D.
    pub fn homogeneous(u0: &str, half_width: f64, n: usize, horizon: f64) -> Self {
        ProblemSpec {
            dim: 1,
            half_width,
            n,
            horizon,
            a: Expr::Num(1.0),
            b: Expr::Num(1.0),
            phi: expr::parse("1 - p").expect("static expression"),
            u0: expr::parse(u0).expect("initial data must parse"),
            lambda: 1.0,
            p_max: 1.0,
            coef_bound: 1.0,
            tilde_lambda: 1.0,
            m_list: vec![10.0, 20.0, 40.0, 80.0],
            epsilon_lift: 0.0,
            cfl: 0.5,
            snapshots: 64,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Invalid(msg));
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dim must be 1 or 2, got {}", self.dim));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("tilde_lambda", self.tilde_lambda),
            ("p_M", self.p_max),
            ("Lambda", self.coef_bound),
            ("L", self.half_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("T must be non-negative, got {}", self.horizon));
        }
        if self.coef_bound < 1.0 {
            return bad(format!("Lambda must be at least 1, got {}", self.coef_bound));
        }
        if self.m_list.is_empty() {
            return bad("m_list is empty".into());
        }
        if let Some(m) = self.m_list.iter().find(|&&m| !(m >= 2.0 && m.is_finite())) {
            return bad(format!("every m must be >= 2, got {m}"));
        }
        if !(self.epsilon_lift >= 0.0 && self.epsilon_lift.is_finite()) {
            return bad(format!("epsilon_lift must be >= 0, got {}", self.epsilon_lift));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if self.snapshots == 0 {
            return bad("snapshots must be at least 1".into());
        }
        Grid::new(self.dim, self.n, self.half_width)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ModelError> {
        Ok(Grid::new(self.dim, self.n, self.half_width)?)
    }

    /// Coefficients are time-independent when neither `a`, `b` nor `Phi` mention `t`.
    pub fn is_autonomous(&self) -> bool {
        !self.a.depends_on(Var::T) && !self.b.depends_on(Var::T) && !self.phi.depends_on(Var::T)
    }

    /// Initial density `u0 + epsilon_lift` sampled on the grid.
    pub fn initial_density(&self, grid: &Grid) -> Result<Field, ModelError> {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let (x, y) = grid.center(k);
            let env = Env::point(x, y, 0.0);
            let u = self.u0.evaluate(&env).map_err(|e| ModelError::eval("u0", &env, e))?;
            data.push(u + self.epsilon_lift);
        }
        Ok(Field::from_vec(*grid, data))
    }
}

/// `p = m/(m-1) (u/b)^(m-1)`.
pub fn pressure_from_density(u: f64, b: f64, m: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    m / (m - 1.0) * (u / b).powf(m - 1.0)
}

/// `u = b ((m-1)/m p)^(1/(m-1))`, the inverse of [`pressure_from_density`].
pub fn density_from_pressure(p: f64, b: f64, m: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    b * ((m - 1.0) / m * p).powf(1.0 / (m - 1.0))
}

fn eval_at(e: &Expr, what: &'static str, env: &Env) -> Result<f64, ModelError> {
    e.evaluate(env).map_err(|err| ModelError::eval(what, env, err))
}

fn log_b_over_a(spec: &ProblemSpec, env: &Env) -> Result<f64, EvalError> {
    let a = spec.a.evaluate(env)?;
    let b = spec.b.evaluate(env)?;
    if a <= 0.0 || b <= 0.0 {
        return Err(EvalError::Domain { op: "log(b/a)", arg: b / a });
    }
    Ok((b / a).ln())
}

fn b_over_a(spec: &ProblemSpec, env: &Env) -> Result<f64, EvalError> {
    Ok(spec.b.evaluate(env)? / spec.a.evaluate(env)?)
}

fn log_b(spec: &ProblemSpec, env: &Env) -> Result<f64, EvalError> {
    let b = spec.b.evaluate(env)?;
    if b <= 0.0 {
        return Err(EvalError::Domain { op: "log(b)", arg: b });
    }
    Ok(b.ln())
}

const SPACE_AXES: [Var; 2] = [Var::X, Var::Y];

/// Coefficient fields on a grid at one time, plus the growth term.
#[derive(Debug, Clone)]
pub struct DerivedCoefficients {
    pub t: f64,
    pub a: Field,
    pub b: Field,
    pub b_over_a: Field,
    /// `gamma = grad log(b/a)`, one field per axis.
    pub gamma: Vec<Field>,
    pub dt_b: Field,
    pub dt_log_b: Field,
    pub lap_log_b_over_a: Field,
    phi: Expr,
}

impl DerivedCoefficients {
    pub fn compute(spec: &ProblemSpec, grid: &Grid, t: f64) -> Result<Self, ModelError> {
        let len = grid.len();
        let mut a = Vec::with_capacity(len);
        let mut b = Vec::with_capacity(len);
        let mut gamma = vec![Vec::with_capacity(len); grid.dim()];
        let mut dt_b = Vec::with_capacity(len);
        let mut dt_log_b = Vec::with_capacity(len);
        let mut lap = Vec::with_capacity(len);
        let b_static = !spec.b.depends_on(Var::T);
        for k in 0..len {
            let (x, y) = grid.center(k);
            let env = Env::point(x, y, t);
            let wrap = |what, e| ModelError::eval(what, &env, e);
            a.push(eval_at(&spec.a, "a", &env)?);
            b.push(eval_at(&spec.b, "b", &env)?);
            let mut l = 0.0;
            for (axis, g) in gamma.iter_mut().enumerate() {
                let var = SPACE_AXES[axis];
                let f = |e: &Env| log_b_over_a(spec, e);
                g.push(fd_derivative_with(f, &env, var, 1, None).map_err(|e| wrap("grad log(b/a)", e))?);
                l += fd_derivative_with(f, &env, var, 2, None).map_err(|e| wrap("laplacian log(b/a)", e))?;
            }
            lap.push(l);
            if b_static {
                dt_b.push(0.0);
                dt_log_b.push(0.0);
            } else {
                dt_b.push(
                    fd_derivative_with(|e| spec.b.evaluate(e), &env, Var::T, 1, None)
                        .map_err(|e| wrap("d/dt b", e))?,
                );
                dt_log_b.push(
                    fd_derivative_with(|e| log_b(spec, e), &env, Var::T, 1, None)
                        .map_err(|e| wrap("d/dt log b", e))?,
                );
            }
        }
        let a = Field::from_vec(*grid, a);
        let b = Field::from_vec(*grid, b);
        let b_over_a = b.zip_map(&a, |b, a| b / a);
        Ok(DerivedCoefficients {
            t,
            a,
            b,
            b_over_a,
            gamma: gamma.into_iter().map(|g| Field::from_vec(*grid, g)).collect(),
            dt_b: Field::from_vec(*grid, dt_b),
            dt_log_b: Field::from_vec(*grid, dt_log_b),
            lap_log_b_over_a: Field::from_vec(*grid, lap),
            phi: spec.phi.clone(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }

    /// Replaces the growth term, e.g. by `0` for source-free validation runs.
    pub fn with_phi(mut self, phi: Expr) -> Self {
        self.phi = phi;
        self
    }

    pub fn phi_expr(&self) -> &Expr {
        &self.phi
    }

    /// `Phi(x_k, t, p)`.
    pub fn phi(&self, k: usize, p: f64) -> Result<f64, ModelError> {
        let (x, y) = self.grid().center(k);
        let env = Env::point(x, y, self.t).with_p(p);
        eval_at(&self.phi, "phi", &env)
    }

    /// `Phi~ = Phi - a d/dt log b`.
    pub fn phi_tilde(&self, k: usize, p: f64) -> Result<f64, ModelError> {
        Ok(self.phi(k, p)? - self.a.values()[k] * self.dt_log_b.values()[k])
    }

    /// `Phi_bar = (b/a) Phi - d/dt b`.
    pub fn phi_bar(&self, k: usize, p: f64) -> Result<f64, ModelError> {
        Ok(self.b_over_a.values()[k] * self.phi(k, p)? - self.dt_b.values()[k])
    }

    pub fn inf_a(&self) -> f64 {
        self.a.min()
    }
}

/// Hands out coefficients at any time, computing them once when they do not depend on `t`.
#[derive(Debug, Clone)]
pub struct CoefficientSource {
    spec: Arc<ProblemSpec>,
    grid: Grid,
    fixed: Option<Arc<DerivedCoefficients>>,
    phi_override: Option<Expr>,
}

impl CoefficientSource {
    pub fn new(spec: Arc<ProblemSpec>, grid: Grid) -> Result<Self, ModelError> {
        Self::with_phi(spec, grid, None)
    }

    pub fn with_phi(spec: Arc<ProblemSpec>, grid: Grid, phi_override: Option<Expr>) -> Result<Self, ModelError> {
        let autonomous = !spec.a.depends_on(Var::T)
            && !spec.b.depends_on(Var::T)
            && !phi_override.as_ref().unwrap_or(&spec.phi).depends_on(Var::T);
        let mut src = CoefficientSource { spec, grid, fixed: None, phi_override };
        if autonomous {
            src.fixed = Some(Arc::new(src.compute(0.0)?));
        }
        Ok(src)
    }

    fn compute(&self, t: f64) -> Result<DerivedCoefficients, ModelError> {
        let c = DerivedCoefficients::compute(&self.spec, &self.grid, t)?;
        Ok(match &self.phi_override {
            Some(phi) => c.with_phi(phi.clone()),
            None => c,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_autonomous(&self) -> bool {
        self.fixed.is_some()
    }

    pub fn at(&self, t: f64) -> Result<Arc<DerivedCoefficients>, ModelError> {
        match &self.fixed {
            // Evaluation time only matters through Phi, which is t-free here.
            Some(c) => Ok(Arc::clone(c)),
            None => Ok(Arc::new(self.compute(t)?)),
        }
    }
}

/// Point in space-time-pressure where a check attained its worst margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: Option<f64>,
    pub t: f64,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckId {
    A1Bounds,
    A1Derivatives,
    A1PhiMonotone,
    A1PhiRoot,
    A2Initial,
    A3Coefficients,
    A4Structural,
}

impl CheckId {
    pub fn label(self) -> &'static str {
        match self {
            CheckId::A1Bounds => "A1 bounds 1/Lambda <= a,b <= Lambda",
            CheckId::A1Derivatives => "A1 |d^k a|, |d^k b| <= Lambda (k <= 2)",
            CheckId::A1PhiMonotone => "A1-Phi dPhi/dp <= -lambda",
            CheckId::A1PhiRoot => "A1-Phi Phi(p_M) = 0",
            CheckId::A2Initial => "A2 initial data",
            CheckId::A3Coefficients => "A3 coefficient geometry",
            CheckId::A4Structural => "A4 Delta log(b/a) >= tilde_lambda - lambda",
        }
    }
}

/// Outcome of one check: `margin >= -tol` passes; `worst_value` is the measured
/// quantity at the worst sample.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: CheckId,
    pub passed: bool,
    pub worst_value: f64,
    pub margin: f64,
    pub worst_point: Option<SamplePoint>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoefficientClause {
    OneDimensional,
    Radial,
    GrowthBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<CheckResult>,
    pub clause: Option<CoefficientClause>,
    pub omitted: Vec<String>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: CheckId) -> &CheckResult {
        self.checks.iter().find(|c| c.id == id).expect("every check is always reported")
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<46} {:<6} {:>14} {:>14}  worst point", "check", "result", "value", "margin")?;
        for c in &self.checks {
            let pt = match c.worst_point {
                Some(p) => format!(
                    "x={:.4}{} t={:.4}{}",
                    p.x,
                    p.y.map(|y| format!(" y={y:.4}")).unwrap_or_default(),
                    p.t,
                    p.p.map(|p| format!(" p={p:.4}")).unwrap_or_default()
                ),
                None => "-".into(),
            };
            writeln!(
                f,
                "{:<46} {:<6} {:>14.6e} {:>14.6e}  {}{}",
                c.id.label(),
                if c.passed { "pass" } else { "FAIL" },
                c.worst_value,
                c.margin,
                pt,
                if c.note.is_empty() { String::new() } else { format!("  ({})", c.note) }
            )?;
        }
        for o in &self.omitted {
            writeln!(f, "not checked: {o}")?;
        }
        Ok(())
    }
}

// Tracks the worst margin of an inequality over samples.
struct Worst {
    margin: f64,
    value: f64,
    point: Option<SamplePoint>,
}

impl Worst {
    fn new() -> Self {
        Worst { margin: f64::INFINITY, value: f64::NAN, point: None }
    }

    fn update(&mut self, margin: f64, value: f64, point: SamplePoint) {
        if margin < self.margin || self.point.is_none() {
            self.margin = margin;
            self.value = value;
            self.point = Some(point);
        }
    }

    fn result(self, id: CheckId, note: impl Into<String>) -> CheckResult {
        CheckResult {
            id,
            passed: self.margin >= -CHECK_TOL,
            worst_value: self.value,
            margin: self.margin,
            worst_point: self.point,
            note: note.into(),
        }
    }
}

struct Sampler {
    dim: usize,
    coords: Vec<f64>,
    times: Vec<f64>,
}

impl Sampler {
    fn new(spec: &ProblemSpec) -> Self {
        let mut per_axis = 2 * spec.n;
        if spec.dim == 2 {
            per_axis = per_axis.min(CHECK_MAX_2D_SAMPLES);
        }
        let fine = Grid::new(1, per_axis.max(8), spec.half_width).expect("validated spec");
        let coords = (0..fine.n()).map(|i| fine.coord(i)).collect();
        let times = (0..CHECK_TIME_SLICES)
            .map(|k| spec.horizon * k as f64 / (CHECK_TIME_SLICES - 1) as f64)
            .collect();
        Sampler { dim: spec.dim, coords, times }
    }

    fn points(&self) -> impl Iterator<Item = (f64, Option<f64>)> + '_ {
        let ny = if self.dim == 1 { 1 } else { self.coords.len() };
        (0..ny).flat_map(move |j| {
            self.coords.iter().map(move |&x| (x, if self.dim == 1 { None } else { Some(self.coords[j]) }))
        })
    }
}

fn point(env: &Env) -> SamplePoint {
    SamplePoint { x: env.x.unwrap_or(f64::NAN), y: env.y, t: env.t.unwrap_or(0.0), p: env.p }
}

fn fd(
    what: &'static str,
    e: &Expr,
    env: &Env,
    var: Var,
    order: u8,
) -> Result<f64, ModelError> {
    fd_derivative_with(|en| e.evaluate(en), env, var, order, None).map_err(|err| ModelError::eval(what, env, err))
}

/// Samples the space-time-pressure box and checks every assumption.
pub fn check_assumptions(spec: &ProblemSpec) -> Result<AssumptionReport, ModelError> {
    spec.validate()?;
    let s = Sampler::new(spec);
    let lam = spec.coef_bound;
    let mut checks = Vec::new();

    // A1: bounds and derivative bounds on a and b.
    let mut bounds = Worst::new();
    let mut derivs = Worst::new();
    let mut vars = vec![Var::X, Var::T];
    if spec.dim == 2 {
        vars.insert(1, Var::Y);
    }
    for &t in &s.times {
        for (x, y) in s.points() {
            let env = Env::point(x, y, t);
            for (name, e) in [("a", &spec.a), ("b", &spec.b)] {
                let v = eval_at(e, name, &env)?;
                let m = (v - 1.0 / lam).min(lam - v);
                bounds.update(m, v, point(&env));
                for &var in &vars {
                    for order in 1..=2 {
                        let d = fd(name, e, &env, var, order)?;
                        derivs.update(lam - d.abs(), d, point(&env));
                    }
                }
            }
        }
    }
    checks.push(bounds.result(CheckId::A1Bounds, ""));
    checks.push(derivs.result(CheckId::A1Derivatives, "orders 3-4 not checked"));

    // A1-Phi: monotone decrease at rate lambda and root at p_M.
    let mut mono = Worst::new();
    let mut root = Worst::new();
    for &t in &s.times {
        for (x, y) in s.points() {
            for l in 0..CHECK_PRESSURE_LEVELS {
                let p = spec.p_max * l as f64 / (CHECK_PRESSURE_LEVELS - 1) as f64;
                let env = Env::point(x, y, t).with_p(p);
                let d = fd("phi", &spec.phi, &env, Var::P, 1)?;
                mono.update(-spec.lambda - d, d, point(&env));
            }
            let env = Env::point(x, y, t).with_p(spec.p_max);
            let v = eval_at(&spec.phi, "phi", &env)?;
            root.update(-v.abs(), v, point(&env));
        }
    }
    checks.push(mono.result(CheckId::A1PhiMonotone, ""));
    checks.push(root.result(CheckId::A1PhiRoot, ""));

    // A2: non-negativity, pressure ceiling for every m, compact support inside the box.
    let mut init = Worst::new();
    let guard = GUARD_CELLS as f64 * spec.grid()?.h();
    let inner = spec.half_width - guard;
    let mut note = String::new();
    for (x, y) in s.points() {
        let env = Env::point(x, y, 0.0);
        let u = eval_at(&spec.u0, "u0", &env)?;
        init.update(u, u, point(&env));
        let b = eval_at(&spec.b, "b", &env)?;
        for &m in &spec.m_list {
            let p = pressure_from_density(u, b, m);
            init.update(spec.p_max - p, p, point(&env));
        }
        let outside = x.abs() > inner || y.is_some_and(|y| y.abs() > inner);
        if outside && u != 0.0 {
            init.update(-u.abs() - 1.0, u, point(&env));
            note = "initial data is non-zero in the guard band".into();
        }
    }
    checks.push(init.result(CheckId::A2Initial, note));

    let (a3, clause) = check_clause(spec, &s)?;
    checks.push(a3);

    // A4: Delta log(b/a) >= tilde_lambda - lambda.
    let mut a4 = Worst::new();
    let bound = spec.tilde_lambda - spec.lambda;
    for &t in &s.times {
        for (x, y) in s.points() {
            let env = Env::point(x, y, t);
            let mut lap = 0.0;
            for &var in &SPACE_AXES[..spec.dim] {
                lap += fd_derivative_with(|e| log_b_over_a(spec, e), &env, var, 2, None)
                    .map_err(|err| ModelError::eval("laplacian log(b/a)", &env, err))?;
            }
            a4.update(lap - bound, lap, point(&env));
        }
    }
    checks.push(a4.result(CheckId::A4Structural, ""));

    Ok(AssumptionReport {
        checks,
        clause,
        omitted: vec![
            "||d/dt p_m^0||_L1 <= C (a time derivative at t = 0 is not determined by u0 alone)".into(),
            "C^4 bounds of order 3 and 4 on a and b".into(),
        ],
    })
}

fn check_clause(spec: &ProblemSpec, s: &Sampler) -> Result<(CheckResult, Option<CoefficientClause>), ModelError> {
    if spec.dim == 1 {
        let r = CheckResult {
            id: CheckId::A3Coefficients,
            passed: true,
            worst_value: 0.0,
            margin: 0.0,
            worst_point: None,
            note: "clause (i): d = 1".into(),
        };
        return Ok((r, Some(CoefficientClause::OneDimensional)));
    }

    // Clause (ii): a and b radial, compared over 16 rotations of sample points.
    let mut radial = Worst::new();
    let radii: Vec<f64> = s.coords.iter().copied().filter(|&c| c > 0.0).collect();
    for &t in &s.times {
        for &r in &radii {
            for (name, e) in [("a", &spec.a), ("b", &spec.b)] {
                let base = eval_at(e, name, &Env::point(r, Some(0.0), t))?;
                for j in 1..RADIAL_ROTATIONS {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / RADIAL_ROTATIONS as f64;
                    let env = Env::point(r * th.cos(), Some(r * th.sin()), t);
                    let v = eval_at(e, name, &env)?;
                    radial.update(-(v - base).abs(), (v - base).abs(), point(&env));
                }
            }
        }
    }
    let radial = radial.result(CheckId::A3Coefficients, "clause (ii): radial coefficients");
    if radial.passed {
        return Ok((radial, Some(CoefficientClause::Radial)));
    }

    // Clause (iii): |grad(b/a)| <= eps / |x| for |x| >= R with eps = (d - 1/2) / Lambda^2.
    let r_min = spec.half_width / 4.0;
    let eps = (spec.dim as f64 - 0.5) / (spec.coef_bound * spec.coef_bound);
    let mut growth = Worst::new();
    for &t in &s.times {
        for (x, y) in s.points() {
            let rr = x.hypot(y.unwrap_or(0.0));
            if rr < r_min {
                continue;
            }
            let env = Env::point(x, y, t);
            let mut g2 = 0.0;
            for &var in &SPACE_AXES[..spec.dim] {
                let d = fd_derivative_with(|e| b_over_a(spec, e), &env, var, 1, None)
                    .map_err(|err| ModelError::eval("grad(b/a)", &env, err))?;
                g2 += d * d;
            }
            let g = g2.sqrt();
            growth.update(eps / rr - g, g, point(&env));
        }
    }
    let growth = growth.result(CheckId::A3Coefficients, "clause (iii): growth bound on grad(b/a)");
    if growth.passed {
        return Ok((growth, Some(CoefficientClause::GrowthBound)));
    }
    let mut failed = radial;
    failed.note = "neither clause (ii) radial nor clause (iii) growth bound holds".into();
    Ok((failed, None))
}

/// Smallest stiffness for which the L3 Aronson-Benilan bound is guaranteed:
/// `max{2, 1 + (sup 1/a + 1) / (inf 1/a) * 8/3}` over the sampled box.
pub fn ab_m_threshold(spec: &ProblemSpec) -> Result<f64, ModelError> {
    let s = Sampler::new(spec);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in &s.times {
        for (x, y) in s.points() {
            let a = eval_at(&spec.a, "a", &Env::point(x, y, t))?;
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    Ok(threshold_from_range(lo, hi))
}

/// Threshold for `a` ranging over `[a_min, a_max]`.
pub fn threshold_from_range(a_min: f64, a_max: f64) -> f64 {
    let sup_inv = 1.0 / a_min;
    let inf_inv = 1.0 / a_max;
    // Single rounding for the common constant case: (3 inf + 8 (sup + 1)) / (3 inf).
    let t = (3.0 * inf_inv + 8.0 * (sup_inv + 1.0)) / (3.0 * inf_inv);
    t.max(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn base() -> ProblemSpec {
        ProblemSpec::homogeneous("0.9*max(0, 1 - x^2)", 3.0, 32, 1.0)
    }

    #[test]
    fn constitutive_examples() {
        assert_eq!(pressure_from_density(0.0, 2.0, 7.0), 0.0);
        assert_eq!(pressure_from_density(0.5, 1.0, 2.0), 1.0);
        assert_eq!(pressure_from_density(1.0, 1.0, 3.0), 1.5);
        assert_eq!(density_from_pressure(0.0, 1.0, 3.0), 0.0);
        assert_eq!(density_from_pressure(1.0, 1.0, 2.0), 0.5);
        let u = density_from_pressure(pressure_from_density(0.73, 1.2, 5.0), 1.2, 5.0);
        assert!((u - 0.73).abs() < 1e-12);
    }

    #[test]
    fn constants_pass() {
        let r = check_assumptions(&base()).unwrap();
        assert!(r.all_passed(), "{r}");
        assert_eq!(r.clause, Some(CoefficientClause::OneDimensional));
    }

    #[test]
    fn increasing_phi_fails_monotonicity() {
        let mut s = base();
        s.phi = parse("p").unwrap();
        let r = check_assumptions(&s).unwrap();
        let c = r.get(CheckId::A1PhiMonotone);
        assert!(!c.passed);
        assert!((c.worst_value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_packing_passes_structural() {
        let mut s = base();
        s.b = parse("exp(x^2/4)").unwrap();
        s.tilde_lambda = 0.4;
        let r = check_assumptions(&s).unwrap();
        let c = r.get(CheckId::A4Structural);
        assert!(c.passed, "{r}");
        assert!((c.worst_value - 0.5).abs() < 1e-4);
        // b grows past Lambda on this box.
        assert!(!r.get(CheckId::A1Bounds).passed);
    }

    #[test]
    fn support_in_guard_band_fails() {
        let mut s = base();
        s.u0 = parse("0.5").unwrap();
        assert!(!check_assumptions(&s).unwrap().get(CheckId::A2Initial).passed);
    }

    #[test]
    fn pressure_ceiling_on_initial_data() {
        let mut s = base();
        s.u0 = parse("max(0, 1.2 - x^2)").unwrap();
        assert!(!check_assumptions(&s).unwrap().get(CheckId::A2Initial).passed);
    }

    #[test]
    fn two_d_clauses() {
        let mut s = base();
        s.dim = 2;
        s.n = 16;
        s.a = parse("1 + 0.1*exp(-r^2)").unwrap();
        s.u0 = parse("max(0, 0.5 - r^2)").unwrap();
        s.coef_bound = 2.0;
        s.tilde_lambda = 0.5;
        let r = check_assumptions(&s).unwrap();
        assert_eq!(r.clause, Some(CoefficientClause::Radial), "{r}");

        s.a = parse("1 + 0.01*x").unwrap();
        let r = check_assumptions(&s).unwrap();
        assert_eq!(r.clause, Some(CoefficientClause::GrowthBound), "{r}");

        s.a = parse("1 + 0.3*sin(3*x)").unwrap();
        let r = check_assumptions(&s).unwrap();
        assert_eq!(r.clause, None);
        assert!(!r.get(CheckId::A3Coefficients).passed);
    }

    #[test]
    fn eval_errors_carry_point() {
        let mut s = base();
        s.a = parse("log(x)").unwrap();
        match check_assumptions(&s) {
            Err(ModelError::Eval { what, x, .. }) => {
                assert_eq!(what, "a");
                assert!(x < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn threshold_examples() {
        let s = base();
        assert_eq!(ab_m_threshold(&s).unwrap(), 19.0 / 3.0);
        assert_eq!(threshold_from_range(0.5, 2.0), 17.0);
        let mut prev = 0.0;
        for lam in [1.0, 1.5, 2.0, 4.0] {
            let t = threshold_from_range(lam, lam);
            let expect = 1.0 + (1.0 / lam + 1.0) * lam * 8.0 / 3.0;
            assert!((t - expect).abs() < 1e-12);
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn derived_coefficients_definitions() {
        let mut s = base();
        s.a = parse("1 + 0.2*x^2").unwrap();
        s.b = parse("(1 + 0.1*t)*(1.5 + 0.1*sin(x))").unwrap();
        let g = s.grid().unwrap();
        let c = DerivedCoefficients::compute(&s, &g, 0.3).unwrap();
        for k in [3usize, 10, 20] {
            let (x, _) = g.center(k);
            let a = 1.0 + 0.2 * x * x;
            let bx = 1.5 + 0.1 * x.sin();
            let b = 1.03 * bx;
            let gamma = 0.1 * x.cos() / bx - 0.4 * x / a;
            assert!((c.gamma[0].values()[k] - gamma).abs() < 1e-8);
            assert!((c.dt_b.values()[k] - 0.1 * bx).abs() < 1e-8);
            assert!((c.dt_log_b.values()[k] - 0.1 / 1.03).abs() < 1e-8);
            let p = 0.4;
            let phi = 1.0 - p;
            assert!((c.phi_tilde(k, p).unwrap() - (phi - a * 0.1 / 1.03)).abs() < 1e-8);
            assert!((c.phi_bar(k, p).unwrap() - (b / a * phi - 0.1 * bx)).abs() < 1e-8);
        }
    }
}
