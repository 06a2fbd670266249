//! Numerical extremal trajectories on the final constraint submanifold.
//!
//! A [`DeterminedField`](crate::constraint_engine::DeterminedField) supplies
//! a rate for every coordinate and the constraints cutting the manifold the
//! flow must stay on. This module provides:
//!
//! * [`Projector`] — damped Newton projection onto the constraint set,
//!   moving only each constraint's designated dependent coordinate;
//! * [`flow`] — fixed-step fourth-order Runge–Kutta over *all* coordinates
//!   with a projection after every step and invariant monitoring (`|H|`,
//!   constraint residuals, stationarity residuals) along the way;
//! * [`shoot`] — a forward-difference Newton iteration that adjusts the
//!   free (non-state, non-dependent) coordinates at the initial time until
//!   the flow hits the declared terminal state values;
//! * [`write_csv`] / [`diagnostics_text`] — deterministic text renderings
//!   of a trajectory and its invariant summary;
//! * [`trajectory_cost`] — the cost integral along a trajectory.
//!
//! Everything is deterministic: no randomness enters the integration, and
//! output formatting is fixed-width scientific notation, so identical
//! configurations produce byte-identical artifacts.

use thiserror::Error;

use crate::constraint_engine::DeterminedField;
use crate::problem::{evaluate_cost, Boundary, ProblemError};
use crate::symexpr::{diff, eval_at, eval_with_scale, Expr, SymError, VarId, VarKind};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("projection did not converge after {iters} iterations (residual {residual:.3e})")]
    ProjectionDiverged { iters: usize, residual: f64 },
    #[error("singular Jacobian while {context}")]
    SingularJacobian { context: String },
    #[error("constraint residual {residual:.3e} exceeds the drift tolerance at t = {t}")]
    Drift { t: f64, residual: f64 },
    #[error("shooting did not converge after {iters} iterations (residual {residual:.3e})")]
    ShootingDiverged { iters: usize, residual: f64 },
    #[error("shooting needs a square system: {unknowns} free coordinates vs {targets} terminal targets")]
    NotSquare { unknowns: usize, targets: usize },
    #[error("no terminal targets: boundary `qT` is empty")]
    NoTargets,
    #[error("boundary entry `{name}` does not name a coordinate")]
    UnknownBoundaryName { name: String },
    #[error("parameter `{name}` needs a concrete value for integration")]
    ParameterValue { name: String },
    #[error("horizon: final time must exceed t0")]
    BadHorizon,
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// A computed trajectory: one full-width point per step (indexed by
/// [`VarId`], so every table symbol has a column; non-coordinates keep
/// their seed values), plus the invariant residuals recorded after each
/// step's projection.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<Vec<f64>>,
    pub h_residuals: Vec<f64>,
    pub constraint_residuals: Vec<f64>,
    pub stationarity_residuals: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self, time: VarId) -> Vec<f64> {
        self.rows.iter().map(|r| r[time.index()]).collect()
    }
}

/// Invariant and configuration summary for a finished trajectory.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub steps: usize,
    pub h: f64,
    pub t0: f64,
    pub horizon: f64,
    pub max_h_residual: f64,
    pub max_constraint_residual: f64,
    pub max_stationarity_residual: f64,
    pub cost: f64,
}

/// Result of the boundary-value solve.
#[derive(Debug, Clone)]
pub struct ShootReport {
    /// Free coordinates and the initial values the solver settled on.
    pub unknowns: Vec<(VarId, f64)>,
    pub iterations: usize,
    pub residual: f64,
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

/// Newton projection onto the constraint set: each constraint moves only
/// its designated dependent coordinate, so states (and the free
/// coordinates) are never touched.
pub struct Projector {
    constraints: Vec<Expr>,
    dependents: Vec<VarId>,
    jacobian: Vec<Vec<Expr>>,
}

const PROJECT_TOL: f64 = 1e-10;
const PROJECT_ITERS: usize = 50;
const PROJECT_HALVINGS: usize = 30;

impl Projector {
    pub fn new(field: &DeterminedField) -> Projector {
        let constraints: Vec<Expr> = field.constraints.iter().map(|c| c.expr.clone()).collect();
        let jacobian = constraints
            .iter()
            .map(|c| field.dependents.iter().map(|&d| diff(c, d)).collect())
            .collect();
        Projector {
            constraints,
            dependents: field.dependents.clone(),
            jacobian,
        }
    }

    /// Residual vector and per-constraint evaluation scales at `point`.
    fn residuals(&self, point: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SymError> {
        let mut values = Vec::with_capacity(self.constraints.len());
        let mut scales = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let (v, s) = eval_with_scale(c, &|id| point[id.index()])?;
            values.push(v);
            scales.push(s);
        }
        Ok((values, scales))
    }

    fn metric(values: &[f64], scales: &[f64]) -> f64 {
        values
            .iter()
            .zip(scales)
            .map(|(v, s)| v.abs() / (1.0 + s))
            .fold(0.0, f64::max)
    }

    fn within_tol(values: &[f64], scales: &[f64]) -> bool {
        values
            .iter()
            .zip(scales)
            .all(|(v, s)| v.abs() <= PROJECT_TOL * (1.0 + s))
    }

    /// Project `point` onto the constraint set in place. Returns the final
    /// maximum absolute residual.
    ///
    /// # Errors
    ///
    /// Diverges (after 50 damped iterations) or hits a singular Jacobian.
    pub fn project(&self, point: &mut [f64]) -> Result<f64, IntegrateError> {
        let k = self.constraints.len();
        if k == 0 {
            return Ok(0.0);
        }
        let (mut values, mut scales) = self.residuals(point)?;
        for _ in 0..PROJECT_ITERS {
            if Self::within_tol(&values, &scales) {
                return Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
            let mut jac = nalgebra::DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    jac[(i, j)] = eval_at(&self.jacobian[i][j], point)?;
                }
            }
            let rhs = nalgebra::DVector::from_fn(k, |i, _| -values[i]);
            let Some(delta) = jac.lu().solve(&rhs) else {
                return Err(IntegrateError::SingularJacobian {
                    context: "projecting onto the constraint set".to_string(),
                });
            };
            let before = Self::metric(&values, &scales);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=PROJECT_HALVINGS {
                let mut trial: Vec<f64> = point.to_vec();
                for (j, &d) in self.dependents.iter().enumerate() {
                    trial[d.index()] += alpha * delta[j];
                }
                match self.residuals(&trial) {
                    Ok((tv, ts)) => {
                        if Self::metric(&tv, &ts) < before || Self::within_tol(&tv, &ts) {
                            point.copy_from_slice(&trial);
                            values = tv;
                            scales = ts;
                            accepted = true;
                            break;
                        }
                    }
                    Err(_) => {} // domain error: shrink the step
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(IntegrateError::ProjectionDiverged {
                    iters: PROJECT_ITERS,
                    residual: values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                });
            }
        }
        if Self::within_tol(&values, &scales) {
            Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        } else {
            Err(IntegrateError::ProjectionDiverged {
                iters: PROJECT_ITERS,
                residual: values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Initial points and flow
// ---------------------------------------------------------------------------

/// Build the initial full-width point: parameters take their declared
/// values, `t` starts at `boundary.t0`, and every `q0` entry seeds its
/// coordinate. Everything else starts at zero. No projection is applied —
/// [`flow`] projects before recording the first row, and [`shoot`] wants to
/// overwrite the free coordinates first.
///
/// # Errors
///
/// Rejects `q0` names that are not coordinates and parameters without
/// concrete values.
pub fn initial_point(
    field: &DeterminedField,
    boundary: &Boundary,
) -> Result<Vec<f64>, IntegrateError> {
    let table = &field.system.table;
    let mut point = vec![0.0; table.len()];
    for id in table.ids() {
        if table.kind(id) == VarKind::Parameter {
            let value = table.param_spec(id).and_then(|s| s.value);
            match value {
                Some(v) => point[id.index()] = v,
                None => {
                    return Err(IntegrateError::ParameterValue {
                        name: table.name(id).to_string(),
                    })
                }
            }
        }
    }
    point[field.system.time.index()] = boundary.t0;
    for (name, value) in &boundary.q0 {
        let Some(id) = table.lookup(name) else {
            return Err(IntegrateError::UnknownBoundaryName { name: name.clone() });
        };
        point[id.index()] = *value;
    }
    Ok(point)
}

const DRIFT_TOL: f64 = 1e-6;

/// Integrate the determined field from `start` for duration `horizon`
/// (measured from `t0 = start[t]`) with fixed steps of size ≈ `h` (the
/// count is `round(horizon/h)`, the actual step `horizon/steps`, so the
/// final row lands exactly on `t0 + horizon`). Fourth-order Runge–Kutta
/// over all coordinates, projection after every step, invariants recorded
/// after projection. A constraint residual above `1e-6·(1 + scale)` after
/// projection aborts with a drift error.
///
/// # Errors
///
/// Projection failures, drift, evaluation domain errors, or a
/// non-positive horizon.
pub fn flow(
    field: &DeterminedField,
    projector: &Projector,
    start: &[f64],
    horizon: f64,
    h: f64,
) -> Result<Trajectory, IntegrateError> {
    if !(horizon > 0.0 && h > 0.0) {
        return Err(IntegrateError::BadHorizon);
    }
    let steps = (horizon / h).round().max(1.0) as usize;
    let h_eff = horizon / steps as f64;
    let table = &field.system.table;
    let time = field.system.time;
    let t0 = start[time.index()];

    let mut point = start.to_vec();
    projector.project(&mut point)?;

    let mut traj = Trajectory {
        rows: Vec::with_capacity(steps + 1),
        h_residuals: Vec::with_capacity(steps + 1),
        constraint_residuals: Vec::with_capacity(steps + 1),
        stationarity_residuals: Vec::with_capacity(steps + 1),
    };
    record(field, &point, &mut traj)?;

    let width = table.len();
    let deriv = |pt: &[f64], out: &mut [f64]| -> Result<(), SymError> {
        out.fill(0.0);
        out[time.index()] = 1.0;
        for (coord, rate) in &field.rates {
            out[coord.index()] = eval_at(rate, pt)?;
        }
        Ok(())
    };

    let mut k1 = vec![0.0; width];
    let mut k2 = vec![0.0; width];
    let mut k3 = vec![0.0; width];
    let mut k4 = vec![0.0; width];
    let mut stage = vec![0.0; width];
    for n in 0..steps {
        deriv(&point, &mut k1)?;
        for i in 0..width {
            stage[i] = point[i] + 0.5 * h_eff * k1[i];
        }
        deriv(&stage, &mut k2)?;
        for i in 0..width {
            stage[i] = point[i] + 0.5 * h_eff * k2[i];
        }
        deriv(&stage, &mut k3)?;
        for i in 0..width {
            stage[i] = point[i] + h_eff * k3[i];
        }
        deriv(&stage, &mut k4)?;
        for i in 0..width {
            point[i] += h_eff / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        // Pin the clock exactly; RK4 on the unit rate only reproduces
        // t0 + n·h up to rounding.
        point[time.index()] = t0 + (n + 1) as f64 * h_eff;
        projector.project(&mut point)?;
        record(field, &point, &mut traj)?;
        let residual = *traj.constraint_residuals.last().unwrap();
        if residual > DRIFT_TOL * (1.0 + max_abs(&point)) {
            return Err(IntegrateError::Drift {
                t: point[time.index()],
                residual,
            });
        }
    }
    Ok(traj)
}

fn max_abs(point: &[f64]) -> f64 {
    point.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn record(
    field: &DeterminedField,
    point: &[f64],
    traj: &mut Trajectory,
) -> Result<(), IntegrateError> {
    let h_res = eval_at(&field.system.hamiltonian, point).map(f64::abs)?;
    let mut c_res = 0.0f64;
    for c in &field.constraints {
        c_res = c_res.max(eval_at(&c.expr, point)?.abs());
    }
    let mut s_res = 0.0f64;
    for s in &field.stationarity {
        s_res = s_res.max(eval_at(s, point)?.abs());
    }
    traj.rows.push(point.to_vec());
    traj.h_residuals.push(h_res);
    traj.constraint_residuals.push(c_res);
    traj.stationarity_residuals.push(s_res);
    Ok(())
}

/// Cost integral along a trajectory (composite Simpson on the uniform
/// grid the flow produces).
pub fn trajectory_cost(field: &DeterminedField, traj: &Trajectory) -> Result<f64, IntegrateError> {
    let times = traj.times(field.system.time);
    Ok(evaluate_cost(&field.system.problem, &times, &traj.rows)?)
}

/// Summarize a trajectory's invariants and cost.
pub fn diagnose(
    field: &DeterminedField,
    traj: &Trajectory,
    h: f64,
) -> Result<Diagnostics, IntegrateError> {
    let times = traj.times(field.system.time);
    let t0 = *times.first().unwrap();
    let t_end = *times.last().unwrap();
    Ok(Diagnostics {
        steps: traj.rows.len() - 1,
        h,
        t0,
        horizon: t_end - t0,
        max_h_residual: traj.h_residuals.iter().copied().fold(0.0, f64::max),
        max_constraint_residual: traj
            .constraint_residuals
            .iter()
            .copied()
            .fold(0.0, f64::max),
        max_stationarity_residual: traj
            .stationarity_residuals
            .iter()
            .copied()
            .fold(0.0, f64::max),
        cost: trajectory_cost(field, traj)?,
    })
}

// ---------------------------------------------------------------------------
// Shooting
// ---------------------------------------------------------------------------

const SHOOT_TOL: f64 = 1e-8;
const SHOOT_ITERS: usize = 50;
const SHOOT_FD_STEP: f64 = 1e-6;

/// Solve the two-point boundary value problem: adjust the field's free
/// coordinates at `t0` (Newton with a forward-difference Jacobian) until
/// the states named in `boundary.q_final` reach their targets at
/// `t0 + horizon`. Returns the converged trajectory and a report of the
/// solved initial values.
///
/// # Errors
///
/// The system must be square (as many free coordinates as targets);
/// divergence after 50 iterations, singular Jacobians, and flow failures
/// propagate.
pub fn shoot(
    field: &DeterminedField,
    projector: &Projector,
    boundary: &Boundary,
    horizon: f64,
    h: f64,
) -> Result<(Trajectory, ShootReport), IntegrateError> {
    let table = &field.system.table;
    let unknowns = field.free_coordinates();
    let mut targets = Vec::with_capacity(boundary.q_final.len());
    for (name, value) in &boundary.q_final {
        let Some(id) = table.lookup(name) else {
            return Err(IntegrateError::UnknownBoundaryName { name: name.clone() });
        };
        targets.push((id, *value));
    }
    if targets.is_empty() {
        return Err(IntegrateError::NoTargets);
    }
    if unknowns.len() != targets.len() {
        return Err(IntegrateError::NotSquare {
            unknowns: unknowns.len(),
            targets: targets.len(),
        });
    }
    let k = unknowns.len();
    let seed = initial_point(field, boundary)?;
    let mut z: Vec<f64> = unknowns.iter().map(|u| seed[u.index()]).collect();

    let run = |z: &[f64]| -> Result<Trajectory, IntegrateError> {
        let mut start = seed.clone();
        for (j, u) in unknowns.iter().enumerate() {
            start[u.index()] = z[j];
        }
        flow(field, projector, &start, horizon, h)
    };
    let residual_of = |traj: &Trajectory| -> Vec<f64> {
        let last = traj.rows.last().unwrap();
        targets
            .iter()
            .map(|(id, want)| last[id.index()] - want)
            .collect()
    };

    let mut traj = run(&z)?;
    let mut res = residual_of(&traj);
    for iter in 0..SHOOT_ITERS {
        let rmax = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax < SHOOT_TOL {
            return Ok((
                traj,
                ShootReport {
                    unknowns: unknowns.iter().copied().zip(z.iter().copied()).collect(),
                    iterations: iter,
                    residual: rmax,
                },
            ));
        }
        let mut jac = nalgebra::DMatrix::zeros(k, k);
        for j in 0..k {
            let mut zj = z.clone();
            zj[j] += SHOOT_FD_STEP;
            let tj = run(&zj)?;
            let rj = residual_of(&tj);
            for i in 0..k {
                jac[(i, j)] = (rj[i] - res[i]) / SHOOT_FD_STEP;
            }
        }
        let rhs = nalgebra::DVector::from_fn(k, |i, _| -res[i]);
        let Some(delta) = jac.lu().solve(&rhs) else {
            return Err(IntegrateError::SingularJacobian {
                context: "shooting for the terminal targets".to_string(),
            });
        };
        for j in 0..k {
            z[j] += delta[j];
        }
        traj = run(&z)?;
        res = residual_of(&traj);
    }
    let rmax = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rmax < SHOOT_TOL {
        Ok((
            traj,
            ShootReport {
                unknowns: unknowns.iter().copied().zip(z.iter().copied()).collect(),
                iterations: SHOOT_ITERS,
                residual: rmax,
            },
        ))
    } else {
        Err(IntegrateError::ShootingDiverged {
            iters: SHOOT_ITERS,
            residual: rmax,
        })
    }
}

// ---------------------------------------------------------------------------
// Text artifacts
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a trajectory as CSV: `t`, the states, velocities, controls, the
/// energy momentum `p`, the momenta, then the invariant columns
/// `H_residual` and `constraint_residual` (the per-row maximum over all
/// final constraints). Values carry 17 significant digits.
pub fn write_csv(field: &DeterminedField, traj: &Trajectory) -> String {
    let sys = &field.system;
    let table = &sys.table;
    let mut columns: Vec<VarId> = vec![sys.time];
    columns.extend(&sys.problem.states);
    columns.extend(&sys.problem.velocities);
    columns.extend(&sys.problem.controls);
    columns.push(sys.energy);
    columns.extend(&sys.momenta);

    let mut out = String::new();
    let header: Vec<&str> = columns.iter().map(|&c| table.name(c)).collect();
    out.push_str(&header.join(","));
    out.push_str(",H_residual,constraint_residual\n");
    for (i, row) in traj.rows.iter().enumerate() {
        let mut cells: Vec<String> = columns.iter().map(|&c| fmt(row[c.index()])).collect();
        cells.push(fmt(traj.h_residuals[i]));
        cells.push(fmt(traj.constraint_residuals[i]));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Render the diagnostics summary (plus the shooting report, when the
/// trajectory came from [`shoot`]).
pub fn diagnostics_text(
    field: &DeterminedField,
    diag: &Diagnostics,
    shoot: Option<&ShootReport>,
) -> String {
    use std::fmt::Write as _;
    let table = &field.system.table;
    let mut out = String::new();
    let _ = writeln!(out, "steps: {}", diag.steps);
    let _ = writeln!(out, "h: {}", fmt(diag.h));
    let _ = writeln!(out, "t0: {}", fmt(diag.t0));
    let _ = writeln!(out, "horizon: {}", fmt(diag.horizon));
    let _ = writeln!(out, "max |H|: {}", fmt(diag.max_h_residual));
    let _ = writeln!(
        out,
        "max constraint residual: {}",
        fmt(diag.max_constraint_residual)
    );
    let _ = writeln!(
        out,
        "max stationarity residual: {}",
        fmt(diag.max_stationarity_residual)
    );
    let _ = writeln!(out, "cost: {}", fmt(diag.cost));
    if let Some(report) = shoot {
        let _ = writeln!(out, "shooting iterations: {}", report.iterations);
        let _ = writeln!(out, "shooting residual: {}", fmt(report.residual));
        for (id, value) in &report.unknowns {
            let _ = writeln!(out, "solved {}(t0) := {}", table.name(*id), fmt(*value));
        }
    }
    out
}
