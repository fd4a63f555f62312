//! Pressure-side quantities measured on completed trajectories: `w`, `omega`,
//! the complementarity residual, space-time estimate norms, the pressure
//! equation residual and the free-boundary position and speed.
//!
//! Time derivatives use snapshot-level differences (centred inside, one-sided
//! at the ends) and every space-time integral is a trapezoid over snapshot
//! times. Norms cover the whole box; the solver guarantees the support stays
//! inside it.

use std::io::{self, Write};

use thiserror::Error;

use crate::grid::{self, fmt17, gradient, laplacian, lp_integral, negative_part, weighted_laplacian, Field, GridError};
use crate::model::{pressure_from_density, CoefficientSource, DerivedCoefficients, ModelError};
use crate::solver::{support_radius, support_threshold, Trajectory};

/// Default front level as a fraction of `p_M`.
pub const FRONT_LEVEL_FRACTION: f64 = 1e-3;
/// Width, in cells, of the band around the front used to localise residuals.
pub const FRONT_BAND_CELLS: usize = 3;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("{0}")]
    Mismatch(String),
}

/// Pointwise `p = m/(m-1) (u/b)^(m-1)`.
pub fn pressure_field(u: &Field, b: &Field, m: f64) -> Field {
    u.zip_map(b, |u, b| pressure_from_density(u, b, m))
}

fn pointwise(p: &Field, f: impl Fn(usize, f64) -> Result<f64, ModelError>) -> Result<Field, ModelError> {
    let data = p.values().iter().enumerate().map(|(k, &v)| f(k, v)).collect::<Result<Vec<_>, _>>()?;
    Ok(Field::from_vec(*p.grid(), data))
}

fn gamma_dot_grad(p: &Field, c: &DerivedCoefficients) -> Field {
    let g = gradient(p);
    let mut out = Field::zeros(*p.grid());
    for (gamma, dp) in c.gamma.iter().zip(&g.components) {
        for ((o, a), b) in out.values_mut().iter_mut().zip(gamma.values()).zip(dp.values()) {
            *o += a * b;
        }
    }
    out
}

/// `w = Delta p + gamma . grad p + Phi~(p)`.
pub fn w_field(p: &Field, c: &DerivedCoefficients) -> Result<Field, ModelError> {
    let lap = laplacian(p);
    let drift = gamma_dot_grad(p, c);
    let phit = pointwise(p, |k, v| c.phi_tilde(k, v))?;
    let data = (0..p.grid().len()).map(|k| lap.values()[k] + drift.values()[k] + phit.values()[k]).collect();
    Ok(Field::from_vec(*p.grid(), data))
}

/// `omega = div((b/a) grad p) + Phi_bar(p)`.
pub fn omega_field(p: &Field, c: &DerivedCoefficients) -> Result<Field, ModelError> {
    let div = weighted_laplacian(&c.b_over_a, p);
    let phib = pointwise(p, |k, v| c.phi_bar(k, v))?;
    Ok(div.zip_map(&phib, |d, f| d + f))
}

/// Complementarity integrand `|(1 - u/b) p|`.
pub fn complementarity_field(u: &Field, b: &Field, m: f64) -> Field {
    let p = pressure_field(u, b, m);
    let data = (0..u.grid().len())
        .map(|k| ((1.0 - u.values()[k] / b.values()[k]) * p.values()[k]).abs())
        .collect();
    Field::from_vec(*u.grid(), data)
}

/// `|| (1 - u/b) p ||_{L1(Q_T)}`.
pub fn complementarity_residual(traj: &Trajectory, coeffs: &CoefficientSource) -> Result<f64, DiagnosticsError> {
    let mut series = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let c = coeffs.at(s.t)?;
        series.push(complementarity_field(&s.u, &c.b, traj.m).integral());
    }
    if series.len() == 1 {
        return Ok(0.0);
    }
    Ok(grid::spacetime_accumulate(&series, &traj.dts())?)
}

// Snapshot-level time derivative of a per-snapshot field sequence.
fn time_derivatives(fields: &[Field], times: &[f64]) -> Vec<Field> {
    let n = fields.len();
    if n < 2 {
        return fields.iter().map(|f| Field::zeros(*f.grid())).collect();
    }
    (0..n)
        .map(|k| {
            let (lo, hi) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            let dt = times[hi] - times[lo];
            fields[hi].zip_map(&fields[lo], |a, b| (a - b) / dt)
        })
        .collect()
}

/// One pressure-equation residual sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub t: f64,
    pub l1: f64,
    /// Share of the L1 residual within [`FRONT_BAND_CELLS`] of the front (1D only).
    pub near_front_fraction: Option<f64>,
}

/// Pointwise residual of
/// `dp/dt - |grad p|^2/a - (m-1)(p/b)(div((b/a) grad p) + (b/a) Phi - db/dt)`
/// at interior snapshots.
pub fn pressure_equation_residual_fields(
    traj: &Trajectory,
    coeffs: &CoefficientSource,
) -> Result<Vec<(f64, Field)>, DiagnosticsError> {
    let times = traj.times();
    if times.len() < 3 {
        return Ok(Vec::new());
    }
    let m = traj.m;
    let mut ps = Vec::with_capacity(times.len());
    for s in &traj.snapshots {
        ps.push(pressure_field(&s.u, &coeffs.at(s.t)?.b, m));
    }
    let mut out = Vec::with_capacity(times.len() - 2);
    for k in 1..times.len() - 1 {
        let c = coeffs.at(times[k])?;
        let p = &ps[k];
        let dtp = ps[k + 1].zip_map(&ps[k - 1], |a, b| (a - b) / (times[k + 1] - times[k - 1]));
        let grad2 = gradient(p).magnitude().map(|g| g * g);
        let omega = omega_field(p, &c)?;
        let data = (0..p.grid().len())
            .map(|i| {
                let pv = p.values()[i];
                let lhs = dtp.values()[i] - grad2.values()[i] / c.a.values()[i];
                let rhs = (m - 1.0) * pv / c.b.values()[i] * omega.values()[i];
                lhs - rhs
            })
            .collect();
        out.push((times[k], Field::from_vec(*p.grid(), data)));
    }
    Ok(out)
}

/// L1 norm of the pressure-equation residual per interior snapshot.
pub fn pressure_equation_residual(
    traj: &Trajectory,
    coeffs: &CoefficientSource,
    level: f64,
) -> Result<Vec<ResidualSample>, DiagnosticsError> {
    let fields = pressure_equation_residual_fields(traj, coeffs)?;
    let g = *traj.grid();
    let mut out = Vec::with_capacity(fields.len());
    for (t, r) in fields {
        let l1 = lp_integral(&r, 1);
        let mut near = None;
        if g.dim() == 1 && l1 > 0.0 {
            let idx = traj.snapshots.iter().position(|s| s.t == t).expect("residual time is a snapshot time");
            let c = coeffs.at(t)?;
            let p = pressure_field(&traj.snapshots[idx].u, &c.b, traj.m);
            if let Some(i) = front_cell(&p, level) {
                let band: f64 = (0..g.n())
                    .filter(|&j| {
                        // Both fronts of the symmetric profile.
                        let mirror = g.n() - 1 - i;
                        j.abs_diff(i) <= FRONT_BAND_CELLS || j.abs_diff(mirror) <= FRONT_BAND_CELLS
                    })
                    .map(|j| r.values()[j].abs())
                    .sum::<f64>()
                    * g.cell_volume();
                near = Some(band / l1);
            }
        }
        out.push(ResidualSample { t, l1, near_front_fraction: near });
    }
    Ok(out)
}

/// One front sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontSample {
    pub t: f64,
    /// Distance of the outermost `p = level` crossing from the origin.
    pub r: f64,
    /// Centred snapshot difference of `r`.
    pub v_measured: f64,
    /// `|grad p| / a` one cell inside the front.
    pub v_predicted: f64,
}

// Cells on the positive x ray, inward to outward. In 2D the ray is the row just
// above the x axis.
fn ray(p: &Field) -> Vec<usize> {
    let g = p.grid();
    let n = g.n();
    let row = if g.dim() == 1 { 0 } else { n / 2 };
    (n / 2..n).map(|ix| g.flatten(ix, row)).collect()
}

// Outermost ray cell with p >= level, provided a cell further out exists.
fn front_cell(p: &Field, level: f64) -> Option<usize> {
    let r = ray(p);
    let last = r.iter().rposition(|&k| p.values()[k] >= level)?;
    if last + 1 >= r.len() {
        return None;
    }
    Some(r[last])
}

/// Front position on the positive x ray: outermost crossing of `p = level`,
/// located by linear interpolation of the normalized density
/// `v = ((m-1)/m p)^(1/(m-1))` between the two cells that bracket it.
pub fn front_position(p: &Field, level: f64, m: f64) -> Option<f64> {
    let g = p.grid();
    let r = ray(p);
    let last = r.iter().rposition(|&k| p.values()[k] >= level)?;
    if last + 1 >= r.len() {
        return None;
    }
    let v = |q: f64| ((m - 1.0) / m * q.max(0.0)).powf(1.0 / (m - 1.0));
    let (k0, k1) = (r[last], r[last + 1]);
    let (v0, v1, vl) = (v(p.values()[k0]), v(p.values()[k1]), v(level));
    let (x0, y) = g.center(k0);
    let x = x0 + g.h() * (v0 - vl) / (v0 - v1);
    Some(match y {
        None => x,
        Some(y) => x.hypot(y),
    })
}

fn front_speed_predicted(p: &Field, c: &DerivedCoefficients, level: f64) -> Option<f64> {
    let r = ray(p);
    let last = r.iter().rposition(|&k| p.values()[k] >= level)?;
    let inside = r[last.checked_sub(1)?];
    let g = gradient(p).magnitude();
    Some(g.values()[inside] / c.a.values()[inside])
}

/// Front position, measured speed and predicted speed `|grad p|/a` at every
/// snapshot where the pressure exceeds `level` somewhere on the ray.
pub fn front_kinematics(
    traj: &Trajectory,
    coeffs: &CoefficientSource,
    level: f64,
) -> Result<Vec<FrontSample>, DiagnosticsError> {
    let times = traj.times();
    let mut pos = Vec::with_capacity(times.len());
    let mut pred = Vec::with_capacity(times.len());
    for s in &traj.snapshots {
        let c = coeffs.at(s.t)?;
        let p = pressure_field(&s.u, &c.b, traj.m);
        pos.push(front_position(&p, level, traj.m));
        pred.push(front_speed_predicted(&p, &c, level));
    }
    let mut out = Vec::new();
    for k in 0..times.len() {
        let (Some(r), Some(vp)) = (pos[k], pred[k]) else { continue };
        let prev = k.checked_sub(1).and_then(|j| pos[j].map(|r| (times[j], r)));
        let next = pos.get(k + 1).copied().flatten().map(|r| (times[k + 1], r));
        let v = match (prev, next) {
            (Some((t0, r0)), Some((t1, r1))) => (r1 - r0) / (t1 - t0),
            (Some((t0, r0)), None) => (r - r0) / (times[k] - t0),
            (None, Some((t1, r1))) => (r1 - r) / (t1 - times[k]),
            (None, None) => continue,
        };
        out.push(FrontSample { t: times[k], r, v_measured: v, v_predicted: vp });
    }
    Ok(out)
}

/// Front speed from a least-squares line through the positions within
/// `half_window` samples on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedSpeed {
    /// Mean time of the window.
    pub t: f64,
    /// Mean position of the window.
    pub r: f64,
    pub v: f64,
}

/// Windowed least-squares front speed over samples within `half_window` (time)
/// of each sample. The numerical front advances about one cell at a time, so
/// speeds are only meaningful over windows spanning several cells of travel.
pub fn fitted_front_speed(front: &[FrontSample], half_window: f64) -> Vec<FittedSpeed> {
    let mut out = Vec::with_capacity(front.len());
    for s in front {
        let w: Vec<&FrontSample> = front.iter().filter(|q| (q.t - s.t).abs() <= half_window * (1.0 + 1e-9)).collect();
        if w.len() < 2 {
            continue;
        }
        let n = w.len() as f64;
        let mt = w.iter().map(|s| s.t).sum::<f64>() / n;
        let mr = w.iter().map(|s| s.r).sum::<f64>() / n;
        let stt: f64 = w.iter().map(|s| (s.t - mt).powi(2)).sum();
        let str_: f64 = w.iter().map(|s| (s.t - mt) * (s.r - mr)).sum();
        out.push(FittedSpeed { t: mt, r: mr, v: str_ / stt });
    }
    out
}

/// Ratios `v_num(R) / v_den(R)` at the positions of `num` that fall inside the
/// position range of `den` (linear interpolation in `R`; `den` must advance).
pub fn speed_ratio_at_matching_positions(num: &[FittedSpeed], den: &[FittedSpeed]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for s in num {
        let hit = den.windows(2).find(|w| w[0].r <= s.r && s.r <= w[1].r);
        if let Some(w) = hit {
            let v = if w[1].r == w[0].r { w[0].v } else { w[0].v + (w[1].v - w[0].v) * (s.r - w[0].r) / (w[1].r - w[0].r) };
            out.push((s.r, s.v / v));
        }
    }
    out
}

/// Largest change of the front position when the level is scaled by 10 and 1/10.
pub fn front_level_sensitivity(traj: &Trajectory, coeffs: &CoefficientSource, level: f64) -> Result<f64, DiagnosticsError> {
    let mut worst = 0.0f64;
    for s in &traj.snapshots {
        let c = coeffs.at(s.t)?;
        let p = pressure_field(&s.u, &c.b, traj.m);
        if let Some(r) = front_position(&p, level, traj.m) {
            for l in [level * 10.0, level / 10.0] {
                if let Some(r2) = front_position(&p, l, traj.m) {
                    worst = worst.max((r2 - r).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Every estimate measured on one trajectory.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub m: f64,
    pub sup_p: f64,
    pub gradp_l1: f64,
    pub gradp_l2: f64,
    pub gradp_l4: f64,
    pub lapp_l1: f64,
    pub wneg_l3: f64,
    pub dtu_l1: f64,
    pub gradu_l1: f64,
    pub dtp_l1: f64,
    pub comp_residual: f64,
    /// Space-time measure of the box, `(2L)^d T`.
    pub domain_measure: f64,
    pub ab_threshold: f64,
    pub max_clamped_fraction: f64,
    pub ceiling_violated: bool,
    pub front_level: f64,
    pub front_level_sensitivity: f64,
    /// `(t, R)` support radius at every snapshot.
    pub support_radius: Vec<(f64, f64)>,
    pub front: Vec<FrontSample>,
    pub pressure_residual: Vec<ResidualSample>,
}

impl DiagnosticsReport {
    /// `m` exceeds the stiffness threshold of the L3 Aronson-Benilan bound.
    pub fn ab_guaranteed(&self) -> bool {
        self.m > self.ab_threshold
    }

    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        vec![
            ("m", self.m),
            ("sup_p", self.sup_p),
            ("gradp_L1", self.gradp_l1),
            ("gradp_L2", self.gradp_l2),
            ("gradp_L4", self.gradp_l4),
            ("lapp_L1", self.lapp_l1),
            ("wneg_L3", self.wneg_l3),
            ("dtu_L1", self.dtu_l1),
            ("gradu_L1", self.gradu_l1),
            ("dtp_L1", self.dtp_l1),
            ("comp_residual", self.comp_residual),
            ("domain_measure", self.domain_measure),
            ("ab_threshold", self.ab_threshold),
            ("ab_guaranteed", flag(self.ab_guaranteed())),
            ("max_clamped_fraction", self.max_clamped_fraction),
            ("ceiling_violated", flag(self.ceiling_violated)),
            ("front_level", self.front_level),
            ("front_level_sensitivity", self.front_level_sensitivity),
            ("final_support_radius", self.support_radius.last().map_or(0.0, |s| s.1)),
            ("max_pressure_residual_L1", self.pressure_residual.iter().map(|r| r.l1).fold(0.0, f64::max)),
        ]
    }

    pub fn check_finite(&self) -> Result<(), DiagnosticsError> {
        for (name, v) in self.rows() {
            if !v.is_finite() {
                return Err(DiagnosticsError::NonFinite(name.to_string()));
            }
        }
        for f in &self.front {
            if ![f.t, f.r, f.v_measured, f.v_predicted].iter().all(|v| v.is_finite()) {
                return Err(DiagnosticsError::NonFinite(format!("front sample at t={}", f.t)));
            }
        }
        Ok(())
    }

    /// `report_m{m}.csv`: one `name,value` row per quantity. Refuses NaN.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DiagnosticsError> {
        self.check_finite()?;
        let io = |e: io::Error| DiagnosticsError::Mismatch(e.to_string());
        writeln!(out, "name,value").map_err(io)?;
        for (name, v) in self.rows() {
            writeln!(out, "{name},{}", fmt17(v)).map_err(io)?;
        }
        Ok(())
    }

    /// `front_m{m}.csv`: `t,R,v_measured,v_predicted`.
    pub fn write_front_csv<W: Write>(&self, mut out: W) -> Result<(), DiagnosticsError> {
        self.check_finite()?;
        let io = |e: io::Error| DiagnosticsError::Mismatch(e.to_string());
        writeln!(out, "t,R,v_measured,v_predicted").map_err(io)?;
        for f in &self.front {
            writeln!(out, "{},{},{},{}", fmt17(f.t), fmt17(f.r), fmt17(f.v_measured), fmt17(f.v_predicted))
                .map_err(io)?;
        }
        Ok(())
    }

    /// Lemma-type norms that grew by more than a factor 2 on the finer grid.
    pub fn coarsening_violations(fine: &DiagnosticsReport, coarse: &DiagnosticsReport) -> Vec<String> {
        let pick = |r: &DiagnosticsReport| {
            [
                ("gradp_L1", r.gradp_l1),
                ("gradp_L2", r.gradp_l2),
                ("dtu_L1", r.dtu_l1),
                ("gradu_L1", r.gradu_l1),
                ("dtp_L1", r.dtp_l1),
            ]
        };
        pick(fine)
            .iter()
            .zip(pick(coarse).iter())
            .filter(|((_, f), (_, c))| *f > 2.0 * *c && *f > 1e-12)
            .map(|((name, f), (_, c))| format!("{name}: fine {f:e} vs coarse {c:e}"))
            .collect()
    }
}

/// Fills every estimate of [`DiagnosticsReport`] from a completed trajectory.
pub fn estimate_norms(
    traj: &Trajectory,
    coeffs: &CoefficientSource,
    ab_threshold: f64,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    let spec = coeffs.spec();
    let g = *traj.grid();
    if g != *coeffs.grid() {
        return Err(DiagnosticsError::Mismatch("trajectory and coefficients use different grids".into()));
    }
    let m = traj.m;
    let times = traj.times();
    let dts = traj.dts();
    let level = FRONT_LEVEL_FRACTION * spec.p_max;

    let mut us = Vec::with_capacity(times.len());
    let mut ps = Vec::with_capacity(times.len());
    let mut s = Series::default();
    let mut support = Vec::with_capacity(times.len());
    let rate = {
        let c0 = coeffs.at(0.0)?;
        (0..g.len()).map(|k| c0.phi(k, 0.0).map(|v| v / c0.a.values()[k])).collect::<Result<Vec<_>, _>>()?
    }
    .into_iter()
    .fold(0.0f64, f64::max);
    for st in &traj.snapshots {
        let c = coeffs.at(st.t)?;
        let p = pressure_field(&st.u, &c.b, m);
        let gp = gradient(&p).magnitude();
        s.gradp1.push(lp_integral(&gp, 1));
        s.gradp2.push(lp_integral(&gp, 2));
        s.gradp4.push(lp_integral(&gp, 4));
        s.lapp1.push(lp_integral(&laplacian(&p), 1));
        s.wneg3.push(lp_integral(&negative_part(&w_field(&p, &c)?), 3));
        s.gradu1.push(lp_integral(&gradient(&st.u).magnitude(), 1));
        s.comp.push(complementarity_field(&st.u, &c.b, m).integral());
        support.push((st.t, support_radius(&st.u, support_threshold(traj.epsilon_lift, rate, st.t))));
        us.push(st.u.clone());
        ps.push(p);
    }
    for f in time_derivatives(&us, &times) {
        s.dtu1.push(lp_integral(&f, 1));
    }
    for f in time_derivatives(&ps, &times) {
        s.dtp1.push(lp_integral(&f, 1));
    }

    let acc = |v: &[f64], p: u32| -> Result<f64, DiagnosticsError> {
        if v.len() < 2 {
            return Ok(0.0);
        }
        Ok(grid::spacetime_norm(v, &dts, p)?)
    };
    let report = DiagnosticsReport {
        m,
        sup_p: traj.sup_p,
        gradp_l1: acc(&s.gradp1, 1)?,
        gradp_l2: acc(&s.gradp2, 2)?,
        gradp_l4: acc(&s.gradp4, 4)?,
        lapp_l1: acc(&s.lapp1, 1)?,
        wneg_l3: acc(&s.wneg3, 3)?,
        dtu_l1: acc(&s.dtu1, 1)?,
        gradu_l1: acc(&s.gradu1, 1)?,
        dtp_l1: acc(&s.dtp1, 1)?,
        comp_residual: acc(&s.comp, 1)?,
        domain_measure: (2.0 * g.half_width()).powi(g.dim() as i32) * spec.horizon,
        ab_threshold,
        max_clamped_fraction: traj.max_clamped_fraction,
        ceiling_violated: traj.ceiling_violated(),
        front_level: level,
        front_level_sensitivity: front_level_sensitivity(traj, coeffs, level)?,
        support_radius: support,
        front: front_kinematics(traj, coeffs, level)?,
        pressure_residual: pressure_equation_residual(traj, coeffs, level)?,
    };
    report.check_finite()?;
    Ok(report)
}

#[derive(Default)]
struct Series {
    gradp1: Vec<f64>,
    gradp2: Vec<f64>,
    gradp4: Vec<f64>,
    lapp1: Vec<f64>,
    wneg3: Vec<f64>,
    gradu1: Vec<f64>,
    comp: Vec<f64>,
    dtu1: Vec<f64>,
    dtp1: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::model::ProblemSpec;
    use std::sync::Arc;

    fn spec() -> ProblemSpec {
        ProblemSpec::homogeneous("0.9*max(0, 1 - (x/0.5)^2)", 2.0, 64, 0.1)
    }

    #[test]
    fn pressure_field_examples() {
        let g = spec().grid().unwrap();
        let b = Field::constant(g, 1.3);
        assert!(pressure_field(&Field::zeros(g), &b, 7.0).values().iter().all(|&p| p == 0.0));
        let sat = pressure_field(&b, &b, 7.0);
        assert!(sat.values().iter().all(|&p| (p - 7.0 / 6.0).abs() < 1e-15));
        let p = pressure_field(&Field::constant(g, 0.9), &Field::constant(g, 1.0), 40.0);
        let expect = 40.0 / 39.0 * 0.9f64.powi(39);
        assert!((p.values()[0] - expect).abs() < 1e-15);
        // (40/39) 0.9^39 = 0.01684; the collapse below 2% of p_M is the point.
        assert!((expect - 0.0166).abs() < 5e-4);
    }

    #[test]
    fn w_and_omega_reduce_to_phi_at_zero_pressure() {
        let mut s = spec();
        s.a = parse("1 + 0.1*x^2").unwrap();
        s.b = parse("2 + 0.1*sin(x)").unwrap();
        s.coef_bound = 3.0;
        let g = s.grid().unwrap();
        let c = DerivedCoefficients::compute(&s, &g, 0.0).unwrap();
        let p = Field::zeros(g);
        let w = w_field(&p, &c).unwrap();
        let om = omega_field(&p, &c).unwrap();
        for k in 0..g.len() {
            assert!((w.values()[k] - 1.0).abs() < 1e-14);
            let ba = c.b_over_a.values()[k];
            assert!((om.values()[k] - ba).abs() < 1e-14);
        }
    }

    #[test]
    fn w_for_downward_parabola() {
        let s = spec();
        let g = s.grid().unwrap();
        let c = DerivedCoefficients::compute(&s, &g, 0.0).unwrap();
        let p = Field::from_fn(g, |x, _| -x * x / 2.0);
        let w = w_field(&p, &c).unwrap();
        for k in 1..g.len() - 1 {
            let pv = p.values()[k];
            assert!((w.values()[k] - (-1.0 + 1.0 - pv)).abs() < 1e-10);
        }
    }

    #[test]
    fn omega_with_constant_ratio() {
        let mut s = spec();
        s.b = parse("2").unwrap();
        s.coef_bound = 2.0;
        let g = s.grid().unwrap();
        let c = DerivedCoefficients::compute(&s, &g, 0.0).unwrap();
        let p = Field::from_fn(g, |x, _| 1.0 - x * x);
        let om = omega_field(&p, &c).unwrap();
        for k in 1..g.len() - 1 {
            let pv = p.values()[k];
            let expect = 2.0 * -2.0 + 2.0 * (1.0 - pv);
            assert!((om.values()[k] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_trajectory_has_zero_norms() {
        let mut s = spec();
        s.u0 = parse("0").unwrap();
        s.snapshots = 4;
        let tr = crate::solver::simulate(&s, 10.0).unwrap();
        let src = CoefficientSource::new(Arc::new(s), *tr.grid()).unwrap();
        let r = estimate_norms(&tr, &src, 19.0 / 3.0).unwrap();
        for (name, v) in r.rows() {
            if !["m", "domain_measure", "ab_threshold", "ab_guaranteed", "front_level"].contains(&name) {
                assert_eq!(v, 0.0, "{name}");
            }
        }
        assert!(r.front.is_empty());
        assert!(r.pressure_residual.iter().all(|x| x.l1 == 0.0));
        assert_eq!(complementarity_residual(&tr, &src).unwrap(), 0.0);
    }

    #[test]
    fn front_position_interpolates() {
        let g = crate::grid::Grid::new(1, 16, 1.0).unwrap();
        // p linear 1 - x on x in [0, 1), zero beyond.
        let p = Field::from_fn(g, |x, _| (0.5 - x.abs()).max(0.0));
        // With m = 2 the normalized density is linear in p.
        let r = front_position(&p, 0.1, 2.0).unwrap();
        assert!((r - 0.4).abs() < 1e-12, "{r}");
        assert!(front_position(&Field::zeros(g), 0.1, 2.0).is_none());
        let r80 = front_position(&p, 0.1, 80.0).unwrap();
        assert!(r80 > 0.375 && r80 < 0.4375, "{r80}");
    }

    #[test]
    fn report_rejects_nan() {
        let mut s = spec();
        s.snapshots = 4;
        let tr = crate::solver::simulate(&s, 10.0).unwrap();
        let src = CoefficientSource::new(Arc::new(s), *tr.grid()).unwrap();
        let mut r = estimate_norms(&tr, &src, 19.0 / 3.0).unwrap();
        r.gradp_l4 = f64::NAN;
        assert!(matches!(r.write_csv(Vec::new()), Err(DiagnosticsError::NonFinite(_))));
    }

    #[test]
    fn fitted_speed_recovers_linear_motion() {
        let front: Vec<FrontSample> = (0..20)
            .map(|k| {
                let t = k as f64 * 0.05;
                // Staircase around R = 0.5 + 0.6 t.
                let jitter = if k % 2 == 0 { 0.004 } else { -0.004 };
                FrontSample { t, r: 0.5 + 0.6 * t + jitter, v_measured: 0.0, v_predicted: 0.0 }
            })
            .collect();
        let fit = fitted_front_speed(&front, 0.3);
        assert_eq!(fit.len(), 20);
        assert!(fit.iter().all(|f| (f.v - 0.6).abs() < 0.05), "{fit:?}");
        let half: Vec<FittedSpeed> = fit.iter().map(|f| FittedSpeed { v: 0.5 * f.v, ..*f }).collect();
        let ratios = speed_ratio_at_matching_positions(&half, &fit);
        assert!(!ratios.is_empty());
        assert!(ratios.iter().all(|(_, q)| (q - 0.5).abs() < 1e-12));
    }
}
