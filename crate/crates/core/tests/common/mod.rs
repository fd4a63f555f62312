#![allow(dead_code)]

use std::path::PathBuf;

use pmelab::cli::Config;
use pmelab::expr::{parse, Env, Expr};
use pmelab::grid::{fmt17, Field};
use pmelab::model::ProblemSpec;
use pmelab::solver::{simulate_from, SolverOptions};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn load_spec(name: &str) -> ProblemSpec {
    Config::load(&config_path(name)).unwrap().spec
}

/// Self-similar solution of `u_t = (u^m)_xx` in 1D with constant `c`.
pub fn barenblatt(x: f64, t: f64, m: f64, c: f64) -> f64 {
    let alpha = 1.0 / (m - 1.0 + 2.0);
    let k = alpha * (m - 1.0) / (2.0 * m);
    let base = c - k * x * x * t.powf(-2.0 * alpha);
    t.powf(-alpha) * base.max(0.0).powf(1.0 / (m - 1.0))
}

pub const BARENBLATT_C: f64 = 0.25;
pub const BARENBLATT_T0: f64 = 0.1;
pub const BARENBLATT_T1: f64 = 1.0;

/// Relative L1 error at `t = 1` of the m = 2 source-free run from the
/// self-similar profile at `t = 0.1`.
pub fn barenblatt_error(n: usize) -> f64 {
    let m = 2.0;
    let mut spec = ProblemSpec::homogeneous("0", 2.5, n, BARENBLATT_T1 - BARENBLATT_T0);
    spec.snapshots = 1;
    let grid = spec.grid().unwrap();
    let u0 = Field::from_fn(grid, |x, _| barenblatt(x, BARENBLATT_T0, m, BARENBLATT_C));
    let opts = SolverOptions { phi_override: Some(Expr::Num(0.0)), ..SolverOptions::from_spec(&spec) };
    let traj = simulate_from(&spec, m, u0, &opts).unwrap();
    let exact = Field::from_fn(grid, |x, _| barenblatt(x, BARENBLATT_T1, m, BARENBLATT_C));
    let u = &traj.final_state().u;
    let diff: f64 = u.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).sum();
    diff / exact.values().iter().sum::<f64>()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn golden_sources() -> Vec<String> {
    let input = std::fs::read_to_string(golden_dir().join("expressions.txt")).unwrap();
    input.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).map(str::to_string).collect()
}

/// Source, printed form and value (or error) of every golden expression.
pub fn render_golden() -> String {
    let env = Env::point(0.5, Some(-0.25), 0.125).with_p(0.3);
    let mut out = String::new();
    for source in golden_sources() {
        out += &match parse(&source) {
            Err(e) => format!("{source}\tparse error: {e}\n"),
            Ok(expr) => {
                let value = match expr.evaluate(&env) {
                    Ok(v) => fmt17(v),
                    Err(e) => format!("eval error: {e}"),
                };
                format!("{source}\t{expr}\t{value}\n")
            }
        };
    }
    out
}
