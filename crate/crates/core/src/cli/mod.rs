//! Commands behind the `pmelab` binary: `check`, `simulate`, `sweep`, `oracle`.
//!
//! Every command writes into one output directory: a verbatim copy of the
//! config (`config.txt`), the CSV outputs and `manifest.json`.

pub mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{Config, ConfigError};

use crate::diagnostics::{estimate_norms, DiagnosticsError, DiagnosticsReport};
use crate::grid::fmt17;
use crate::model::{ab_m_threshold, check_assumptions, AssumptionReport, CoefficientSource, ModelError, ProblemSpec};
use crate::oracle::{
    cauchy_table, front_ode, front_position_error, initial_support_edge, interpolate, saturated_profile, write_front_csv,
    LinearGrowth, OracleError, SlopeSource,
};
use crate::solver::{simulate, SolverError, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("assumptions not satisfied; rerun with --force (or force = true) to simulate anyway")]
    Refused,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("run for m = {m} failed: {message}")]
    Member { m: f64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
}

impl CliError {
    /// 1 for configuration and validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) | CliError::Refused => 1,
            CliError::Model(ModelError::Invalid(_) | ModelError::Grid(_)) => 1,
            CliError::Oracle(OracleError::Unsupported(_) | OracleError::Invalid(_)) => 1,
            _ => 2,
        }
    }
}

/// Command-line overrides of the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub m: Option<f64>,
    pub force: bool,
    pub jobs: Option<usize>,
    pub outdir: Option<PathBuf>,
    /// Sweep directory whose fronts `oracle` compares against.
    pub sweep: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub m: f64,
    pub status: String,
    pub error: Option<String>,
    pub wall_seconds: f64,
    pub steps: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    pub error: Option<String>,
    pub config: String,
    pub forced: bool,
    pub assumptions: Option<AssumptionReport>,
    pub ab_threshold: Option<f64>,
    pub runs: Vec<RunEntry>,
    pub files: Vec<String>,
    pub wall_seconds: f64,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            tool: "pmelab".into(),
            version: VERSION.into(),
            command: command.into(),
            status: "complete".into(),
            error: None,
            config: CONFIG_COPY.into(),
            forced: false,
            assumptions: None,
            ab_threshold: None,
            runs: Vec::new(),
            files: Vec::new(),
            wall_seconds: 0.0,
        }
    }
}

pub const CONFIG_COPY: &str = "config.txt";
pub const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(io_err(path))
}

/// `10` for `m = 10`, `2.5` for `m = 2.5`.
pub fn m_label(m: f64) -> String {
    format!("{m}")
}

pub fn member_dir(m: f64) -> String {
    format!("m{}", m_label(m))
}

pub fn snapshot_name(m: f64, t: f64) -> String {
    format!("u_m{}_t{t:.6}.csv", m_label(m))
}

struct Session {
    config: Config,
    outdir: PathBuf,
    force: bool,
}

impl Session {
    fn open(config_path: &Path, ov: &Overrides) -> Result<Session, CliError> {
        let config = Config::load(config_path)?;
        config.spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let outdir = ov.outdir.clone().unwrap_or_else(|| config.outdir.clone());
        let force = ov.force || config.force;
        fs::create_dir_all(&outdir).map_err(io_err(&outdir))?;
        let copy = outdir.join(CONFIG_COPY);
        fs::write(&copy, &config.text).map_err(io_err(&copy))?;
        Ok(Session { config, outdir, force })
    }

    fn spec(&self) -> &ProblemSpec {
        &self.config.spec
    }

    fn finish(&self, mut manifest: RunManifest, started: Instant) -> Result<(), CliError> {
        manifest.wall_seconds = started.elapsed().as_secs_f64();
        let path = self.outdir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }
}

/// Prints the assumption table, writes `assumptions.txt`, and returns the report.
pub fn cmd_check(config_path: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<AssumptionReport, CliError> {
    let started = Instant::now();
    let session = Session::open(config_path, ov)?;
    let report = check_assumptions(session.spec())?;
    let threshold = ab_m_threshold(session.spec())?;
    let table = format!(
        "{report}m threshold for the L3 Aronson-Benilan bound: {threshold}\noverall: {}\n",
        if report.all_passed() { "pass" } else { "FAIL" }
    );
    out.write_all(table.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
    let path = session.outdir.join("assumptions.txt");
    fs::write(&path, &table).map_err(io_err(&path))?;
    let mut manifest = RunManifest::new("check");
    manifest.assumptions = Some(report.clone());
    manifest.ab_threshold = Some(threshold);
    manifest.files.push("assumptions.txt".into());
    if !report.all_passed() {
        manifest.status = "failed".into();
    }
    session.finish(manifest, started)?;
    Ok(report)
}

fn gate(session: &Session, manifest: &mut RunManifest, out: &mut dyn Write) -> Result<(), CliError> {
    let report = check_assumptions(session.spec())?;
    manifest.ab_threshold = Some(ab_m_threshold(session.spec())?);
    manifest.forced = session.force;
    let passed = report.all_passed();
    manifest.assumptions = Some(report.clone());
    if !passed {
        let note = if session.force { "continuing (forced)" } else { "refusing to run" };
        writeln!(out, "{report}assumptions failed; {note}").map_err(io_err(Path::new("<stdout>")))?;
        if !session.force {
            manifest.status = "refused".into();
            return Err(CliError::Refused);
        }
    }
    Ok(())
}

/// One member run: simulate, diagnose, write `m{m}/` and return its entry.
fn run_member(
    spec: &ProblemSpec,
    coeffs: &CoefficientSource,
    threshold: f64,
    m: f64,
    outdir: &Path,
) -> (RunEntry, Option<(Trajectory, DiagnosticsReport)>) {
    let started = Instant::now();
    let mut entry =
        RunEntry { m, status: "complete".into(), error: None, wall_seconds: 0.0, steps: 0, files: Vec::new() };
    let result = (|| -> Result<(Trajectory, DiagnosticsReport), CliError> {
        let traj = simulate(spec, m)?;
        entry.steps = traj.step_count;
        let report = estimate_norms(&traj, coeffs, threshold)?;
        let dir = member_dir(m);
        for s in &traj.snapshots {
            let rel = format!("{dir}/{}", snapshot_name(m, s.t));
            write_with(&outdir.join(&rel), |w| s.u.write_csv(w))?;
            entry.files.push(rel);
        }
        let rel = format!("{dir}/steps.csv");
        write_with(&outdir.join(&rel), |w| traj.write_steps_csv(w))?;
        entry.files.push(rel);
        let rel = format!("{dir}/report_m{}.csv", m_label(m));
        let mut w = create(&outdir.join(&rel))?;
        report.write_csv(&mut w)?;
        w.flush().map_err(io_err(&outdir.join(&rel)))?;
        entry.files.push(rel);
        let rel = format!("{dir}/front_m{}.csv", m_label(m));
        let mut w = create(&outdir.join(&rel))?;
        report.write_front_csv(&mut w)?;
        w.flush().map_err(io_err(&outdir.join(&rel)))?;
        entry.files.push(rel);
        Ok((traj, report))
    })();
    entry.wall_seconds = started.elapsed().as_secs_f64();
    match result {
        Ok(r) => (entry, Some(r)),
        Err(e) => {
            entry.status = "failed".into();
            entry.error = Some(e.to_string());
            (entry, None)
        }
    }
}

fn coefficient_source(spec: &ProblemSpec) -> Result<CoefficientSource, CliError> {
    Ok(CoefficientSource::new(std::sync::Arc::new(spec.clone()), spec.grid()?)?)
}

/// Single run at `--m` (default: first entry of `m_list`). Returns the output directory.
pub fn cmd_simulate(config_path: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let session = Session::open(config_path, ov)?;
    let m = ov.m.unwrap_or(session.spec().m_list[0]);
    let mut spec = session.spec().clone();
    spec.m_list = vec![m];
    spec.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let mut manifest = RunManifest::new("simulate");
    if let Err(e) = gate(&session, &mut manifest, out) {
        session.finish(manifest, started)?;
        return Err(e);
    }
    let coeffs = coefficient_source(&spec)?;
    let threshold = manifest.ab_threshold.unwrap_or(f64::NAN);
    let (entry, result) = run_member(&spec, &coeffs, threshold, m, &session.outdir);
    let failure = entry.error.clone();
    manifest.runs.push(entry);
    if let Some(message) = failure {
        manifest.status = "partial".into();
        manifest.error = Some(message.clone());
        session.finish(manifest, started)?;
        return Err(CliError::Member { m, message });
    }
    let (traj, report) = result.expect("successful runs return their data");
    writeln!(
        out,
        "m = {}: {} steps, sup p = {:.6}, complementarity residual = {:.6e}",
        m_label(m),
        traj.step_count,
        report.sup_p,
        report.comp_residual
    )
    .map_err(io_err(Path::new("<stdout>")))?;
    session.finish(manifest, started)?;
    Ok(session.outdir.clone())
}

/// Maximum relative front-position error against the restarted front ODE, when
/// the problem is in the oracle's class.
fn front_error(spec: &ProblemSpec, report: &DiagnosticsReport) -> Result<Option<f64>, CliError> {
    match LinearGrowth::from_spec(spec) {
        Ok(params) => Ok(front_position_error(&report.front, params)?),
        Err(OracleError::Unsupported(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Every `m` of `m_list` in parallel, then `cauchy.csv` and `sweep_summary.csv`.
pub fn cmd_sweep(config_path: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let session = Session::open(config_path, ov)?;
    let spec = session.spec().clone();
    if spec.m_list.len() < 2 {
        return Err(CliError::Validation(format!("a sweep needs at least two m values, got {}", spec.m_list.len())));
    }
    let jobs = ov.jobs.unwrap_or(spec.m_list.len());
    if jobs == 0 {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("sweep");
    if let Err(e) = gate(&session, &mut manifest, out) {
        session.finish(manifest, started)?;
        return Err(e);
    }
    let coeffs = coefficient_source(&spec)?;
    let threshold = manifest.ab_threshold.unwrap_or(f64::NAN);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let members: Vec<_> = pool.install(|| {
        spec.m_list.par_iter().map(|&m| run_member(&spec, &coeffs, threshold, m, &session.outdir)).collect()
    });
    let mut runs = Vec::new();
    let mut failure = None;
    for (entry, result) in members {
        if failure.is_none() {
            if let Some(message) = &entry.error {
                failure = Some((entry.m, message.clone()));
            }
        }
        manifest.runs.push(entry);
        runs.extend(result);
    }
    if let Some((m, message)) = failure {
        manifest.status = "partial".into();
        manifest.error = Some(format!("m = {m}: {message}"));
        session.finish(manifest, started)?;
        return Err(CliError::Member { m, message });
    }
    let (trajs, reports): (Vec<Trajectory>, Vec<DiagnosticsReport>) = runs.into_iter().unzip();
    let table = cauchy_table(&trajs, &coeffs)?;
    write_with(&session.outdir.join("cauchy.csv"), |w| table.write_csv(w))?;
    manifest.files.push("cauchy.csv".into());

    let mut summary = String::from("m,sup_p,comp_residual,L4_gradp,L3_wneg,front_err\n");
    for r in &reports {
        let err = front_error(&spec, r)?.map(fmt17).unwrap_or_default();
        summary += &format!(
            "{},{},{},{},{},{}\n",
            fmt17(r.m),
            fmt17(r.sup_p),
            fmt17(r.comp_residual),
            fmt17(r.gradp_l4),
            fmt17(r.wneg_l3),
            err
        );
    }
    let path = session.outdir.join("sweep_summary.csv");
    fs::write(&path, &summary).map_err(io_err(&path))?;
    manifest.files.push("sweep_summary.csv".into());
    for row in &table.rows {
        writeln!(
            out,
            "m {} -> {}: |du|_L1 = {:.6e}, |dp|_L1 = {:.6e}",
            m_label(row.m_low),
            m_label(row.m_high),
            row.du_l1,
            row.dp_l1
        )
        .map_err(io_err(Path::new("<stdout>")))?;
    }
    session.finish(manifest, started)?;
    Ok(session.outdir.clone())
}

fn read_front_csv(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |message: String| CliError::Input { path: path.to_path_buf(), message };
    let mut lines = text.lines();
    if lines.next() != Some("t,R,v_measured,v_predicted") {
        return Err(bad("unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut cols = line.split(',').map(str::parse::<f64>);
            match (cols.next(), cols.next()) {
                (Some(Ok(t)), Some(Ok(r))) => Ok((t, r)),
                _ => Err(bad(format!("line {}: malformed row", i + 2))),
            }
        })
        .collect()
}

/// Saturated profile at the initial support edge and the front ODE over
/// `[0, T]`; with a sweep directory, relative position errors per member.
pub fn cmd_oracle(config_path: &Path, ov: &Overrides, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let session = Session::open(config_path, ov)?;
    let spec = session.spec();
    let params = LinearGrowth::from_spec(spec)?;
    let r0 = initial_support_edge(spec)?;
    let profile = saturated_profile(r0, params)?;
    let front = front_ode(r0, params, spec.horizon, SlopeSource::ClosedForm)?;
    let mut manifest = RunManifest::new("oracle");
    write_with(&session.outdir.join("oracle_profile.csv"), |w| profile.write_csv(w))?;
    manifest.files.push("oracle_profile.csv".into());

    let path = session.outdir.join("oracle_front.csv");
    match &ov.sweep {
        None => write_with(&path, |w| write_front_csv(&front, w))?,
        Some(dir) => {
            let measured = spec
                .m_list
                .iter()
                .map(|&m| read_front_csv(&dir.join(member_dir(m)).join(format!("front_m{}.csv", m_label(m)))))
                .collect::<Result<Vec<_>, _>>()?;
            let mut text = String::from("t,R");
            for &m in &spec.m_list {
                text += &format!(",relerr_m{}", m_label(m));
            }
            text.push('\n');
            for &(t, r) in &front {
                text += &format!("{},{}", fmt17(t), fmt17(r));
                for series in &measured {
                    text.push(',');
                    if let Some(rm) = interpolate(series, t) {
                        text += &fmt17((rm - r) / r);
                    }
                }
                text.push('\n');
            }
            fs::write(&path, text).map_err(io_err(&path))?;
        }
    }
    manifest.files.push("oracle_front.csv".into());
    writeln!(
        out,
        "R0 = {r0:.6}, p(0) = {:.9}, R'(0) = {:.9}, R(T) = {:.6}",
        profile.center_value(),
        params.front_speed(r0),
        front.last().map_or(r0, |s| s.1)
    )
    .map_err(io_err(Path::new("<stdout>")))?;
    session.finish(manifest, started)?;
    Ok(session.outdir.clone())
}
