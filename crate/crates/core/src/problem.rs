//! Problem descriptions: parsing, validation, and lowering.
//!
//! Three kinds of optimal control problem are accepted:
//!
//! * **explicit** — state dynamics `q̇^i = F^i(t, q, u)` with running cost
//!   `𝕃(t, q, u)`;
//! * **implicit** — descriptor/DAE constraints `Ψ^α(t, q, v, u) = 0` linking
//!   states to formal velocities, with cost `𝕃(t, q, v, u)`;
//! * **controlled_lagrangian** — second-order dynamics given by a Lagrangian
//!   `L(t, q, v)` and control-dependent forces, with cost `𝕃(t, q, v, u)`.
//!
//! The implicit form is the canonical one: [`lower_explicit`] rewrites the
//! dynamics as constraints `v^i − F^i = 0`, and [`lower_lagrangian`] produces
//! the first-order form of the forced Euler–Lagrange equations on the doubled
//! state `(q, v)` with fresh velocities `(vbar, w)`. Downstream derivation
//! treats all three uniformly.
//!
//! Problems arrive as JSON documents; see [`Problem::from_json_str`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::symexpr::{
    diff, eval_at, parse, print_expr, total_derivative, Expr, ParamSpec, Sampler, SymError,
    VarId, VarKind, VarTable,
};

/// Names and name prefixes the derivation pipeline generates internally;
/// user-chosen state/control/parameter names must avoid them.
pub const RESERVED_NAMES: [&str; 3] = ["t", "p", "E"];
pub const RESERVED_PREFIXES: [&str; 9] = [
    "p_", "v_", "vbar_", "w_", "lam_", "A_", "B_", "C_", "D_",
];

/// Errors raised while reading or lowering a problem description.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("failed to read problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed problem JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(
        "unknown problem kind `{0}` (expected `explicit`, `implicit`, or `controlled_lagrangian`)"
    )]
    UnknownKind(String),
    #[error("invalid problem structure: {0}")]
    Structure(String),
    #[error("velocity Hessian of the Lagrangian is singular on the sample domain")]
    SingularLagrangian,
}

/// Which formulation a [`Problem`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Explicit,
    Implicit,
    ControlledLagrangian,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProblemKind::Explicit => "explicit",
            ProblemKind::Implicit => "implicit",
            ProblemKind::ControlledLagrangian => "controlled_lagrangian",
        };
        f.write_str(s)
    }
}

/// Optional boundary data. Derivation needs none of it; initial value runs
/// need `q0` (plus optional seeds for non-state coordinates); two-point
/// boundary runs need `q0`, `qT`, and the horizon.
#[derive(Debug, Clone, Default)]
pub struct Boundary {
    pub t0: f64,
    /// Final time `T`, if declared.
    pub horizon: Option<f64>,
    /// Initial values by coordinate name: states, and optionally seed values
    /// for velocities/controls used as projection or shooting starting
    /// guesses.
    pub q0: Vec<(String, f64)>,
    /// Terminal targets by state name.
    pub q_final: Vec<(String, f64)>,
}

impl Boundary {
    pub fn value0(&self, name: &str) -> Option<f64> {
        self.q0
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }
}

/// A parsed, registered optimal control problem.
///
/// All expressions live over `table`; `states`, `velocities`, and `controls`
/// list the coordinate ids in declaration order. `velocities` is empty for
/// explicit problems (they have no formal velocity slots) and parallel to
/// `states` otherwise.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub table: VarTable,
    pub time: VarId,
    pub states: Vec<VarId>,
    pub velocities: Vec<VarId>,
    pub controls: Vec<VarId>,
    /// Explicit kind: right-hand sides `F^i`, parallel to `states`.
    pub dynamics: Vec<Expr>,
    /// Implicit kind: constraints `Ψ^α`.
    pub constraints: Vec<Expr>,
    /// Controlled-Lagrangian kind: the Lagrangian `L(t, q, v)`.
    pub lagrangian: Option<Expr>,
    /// Controlled-Lagrangian kind: forces, parallel to `states`.
    pub forces: Vec<Expr>,
    /// Running cost `𝕃`.
    pub cost: Expr,
    pub boundary: Boundary,
}

/// Outcome of [`Problem::validate`]: violations make the problem unusable,
/// notes record measured quantities (ranks, determinant bounds).
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

// ---- JSON mirror ------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    #[serde(default)]
    value: Option<f64>,
    #[serde(default)]
    range: Option<[f64; 2]>,
    #[serde(default)]
    nonzero: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    #[serde(default)]
    t0: f64,
    #[serde(rename = "T", default)]
    horizon: Option<f64>,
    #[serde(default)]
    q0: BTreeMap<String, f64>,
    #[serde(rename = "qT", default)]
    q_final: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: String,
    states: Vec<String>,
    controls: Vec<String>,
    #[serde(default)]
    dynamics: BTreeMap<String, String>,
    #[serde(default)]
    constraints: Vec<String>,
    #[serde(default)]
    lagrangian: Option<String>,
    #[serde(default)]
    forces: BTreeMap<String, String>,
    cost: String,
    #[serde(default)]
    params: BTreeMap<String, RawParam>,
    #[serde(default)]
    boundary: Option<RawBoundary>,
}

fn check_user_name(name: &str, role: &str) -> Result<(), ProblemError> {
    if RESERVED_NAMES.contains(&name) {
        return Err(ProblemError::Structure(format!(
            "{role} `{name}` is a reserved coordinate name"
        )));
    }
    for prefix in RESERVED_PREFIXES {
        if name.starts_with(prefix) {
            return Err(ProblemError::Structure(format!(
                "{role} `{name}` uses the reserved prefix `{prefix}`"
            )));
        }
    }
    Ok(())
}

fn structure(msg: impl Into<String>) -> ProblemError {
    ProblemError::Structure(msg.into())
}

impl Problem {
    /// Read and parse a problem file.
    pub fn load_file(path: &Path) -> Result<Problem, ProblemError> {
        let text = std::fs::read_to_string(path)?;
        Problem::from_json_str(&text)
    }

    /// Parse a problem from its JSON document.
    ///
    /// # Errors
    ///
    /// Malformed JSON, unknown `kind`, name collisions ([`SymError`] from
    /// registration), reserved names, missing or extraneous `dynamics` /
    /// `forces` entries, and malformed parameter ranges are hard errors.
    /// Numeric invariants (constraint rank, Lagrangian regularity) are *not*
    /// checked here; see [`Problem::validate`].
    pub fn from_json_str(text: &str) -> Result<Problem, ProblemError> {
        let raw: RawProblem = serde_json::from_str(text)?;
        let kind = match raw.kind.as_str() {
            "explicit" => ProblemKind::Explicit,
            "implicit" => ProblemKind::Implicit,
            "controlled_lagrangian" => ProblemKind::ControlledLagrangian,
            other => return Err(ProblemError::UnknownKind(other.to_string())),
        };
        if raw.states.is_empty() {
            return Err(structure("at least one state is required"));
        }
        if raw.controls.is_empty() {
            return Err(structure("at least one control is required"));
        }

        let mut table = VarTable::new();
        let time = table.register("t", VarKind::Time)?;
        let mut states = Vec::new();
        for name in &raw.states {
            check_user_name(name, "state")?;
            states.push(table.register(name, VarKind::State)?);
        }
        // Formal velocities v_<state> exist for the implicit and Lagrangian
        // forms; the explicit form works directly on (t, q, u).
        let mut velocities = Vec::new();
        if kind != ProblemKind::Explicit {
            for name in &raw.states {
                velocities.push(table.register(&format!("v_{name}"), VarKind::Velocity)?);
            }
        }
        let mut controls = Vec::new();
        for name in &raw.controls {
            check_user_name(name, "control")?;
            controls.push(table.register(name, VarKind::Control)?);
        }
        for (name, p) in &raw.params {
            check_user_name(name, "parameter")?;
            if let Some([lo, hi]) = p.range {
                if !(lo < hi) {
                    return Err(structure(format!(
                        "parameter `{name}` has an empty range [{lo}, {hi}]"
                    )));
                }
            }
            table.register_param(
                name,
                ParamSpec {
                    value: p.value,
                    range: p.range.map(|[lo, hi]| (lo, hi)),
                    nonzero: p.nonzero,
                },
            )?;
        }

        // Kind-specific payload.
        let mut dynamics = Vec::new();
        let mut constraints = Vec::new();
        let mut lagrangian = None;
        let mut forces = Vec::new();
        match kind {
            ProblemKind::Explicit => {
                if !raw.constraints.is_empty() || raw.lagrangian.is_some() {
                    return Err(structure(
                        "explicit problems take `dynamics`, not `constraints`/`lagrangian`",
                    ));
                }
                for key in raw.dynamics.keys() {
                    if !raw.states.iter().any(|s| s == key) {
                        return Err(structure(format!(
                            "`dynamics` mentions unknown state `{key}`"
                        )));
                    }
                }
                for name in &raw.states {
                    let src = raw.dynamics.get(name).ok_or_else(|| {
                        structure(format!("`dynamics` is missing state `{name}`"))
                    })?;
                    dynamics.push(parse(src, &table)?);
                }
            }
            ProblemKind::Implicit => {
                if !raw.dynamics.is_empty() || raw.lagrangian.is_some() {
                    return Err(structure(
                        "implicit problems take `constraints`, not `dynamics`/`lagrangian`",
                    ));
                }
                if raw.constraints.is_empty() {
                    return Err(structure("implicit problems need at least one constraint"));
                }
                for src in &raw.constraints {
                    constraints.push(parse(src, &table)?);
                }
            }
            ProblemKind::ControlledLagrangian => {
                if !raw.dynamics.is_empty() || !raw.constraints.is_empty() {
                    return Err(structure(
                        "controlled_lagrangian problems take `lagrangian` + `forces`",
                    ));
                }
                let src = raw
                    .lagrangian
                    .as_ref()
                    .ok_or_else(|| structure("`lagrangian` is required"))?;
                lagrangian = Some(parse(src, &table)?);
                for key in raw.forces.keys() {
                    if !raw.states.iter().any(|s| s == key) {
                        return Err(structure(format!(
                            "`forces` mentions unknown state `{key}`"
                        )));
                    }
                }
                for name in &raw.states {
                    let f = match raw.forces.get(name) {
                        Some(src) => parse(src, &table)?,
                        None => Expr::zero(),
                    };
                    forces.push(f);
                }
            }
        }

        let cost = parse(&raw.cost, &table)?;

        let boundary = match raw.boundary {
            None => Boundary::default(),
            Some(b) => {
                for name in b.q0.keys() {
                    let id = table
                        .lookup(name)
                        .ok_or_else(|| structure(format!("`q0` names unknown `{name}`")))?;
                    if !table.kind(id).is_coordinate() || table.kind(id) == VarKind::Time {
                        return Err(structure(format!(
                            "`q0` entry `{name}` is not a coordinate"
                        )));
                    }
                }
                for name in b.q_final.keys() {
                    // Velocities are terminal targets too for Lagrangian
                    // problems: the lowering turns them into states.
                    let ok = match table.lookup(name).map(|id| table.kind(id)) {
                        Some(VarKind::State) => true,
                        Some(VarKind::Velocity) => kind == ProblemKind::ControlledLagrangian,
                        _ => false,
                    };
                    if !ok {
                        return Err(structure(format!(
                            "`qT` entry `{name}` is not a state"
                        )));
                    }
                }
                Boundary {
                    t0: b.t0,
                    horizon: b.horizon,
                    q0: b.q0.into_iter().collect(),
                    q_final: b.q_final.into_iter().collect(),
                }
            }
        };

        Ok(Problem {
            kind,
            table,
            time,
            states,
            velocities,
            controls,
            dynamics,
            constraints,
            lagrangian,
            forces,
            cost,
            boundary,
        })
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.states.iter().map(|&id| self.table.name(id)).collect()
    }

    /// Check the numeric well-posedness invariants. Pure; repeated calls with
    /// the same seed give the same report.
    ///
    /// * implicit: the Jacobian of the constraints with respect to
    ///   `(q, v, u)` must have full row rank at ≥ 90% of 32 sample points
    ///   (independent constraint differentials);
    /// * controlled_lagrangian: the velocity Hessian `W = ∂²L/∂v∂v` must have
    ///   `|det W| > 1e-8` at ≥ 90% of 32 sample points;
    /// * parameters flagged `nonzero` must not have a declared value of zero;
    /// * declared boundary data must satisfy `T > t0`.
    pub fn validate(&self, seed: u64) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut sampler = Sampler::with_seed(seed);
        const SAMPLES: usize = 32;

        match self.kind {
            ProblemKind::Explicit => {}
            ProblemKind::Implicit => {
                let cols: Vec<VarId> = self
                    .states
                    .iter()
                    .chain(self.velocities.iter())
                    .chain(self.controls.iter())
                    .copied()
                    .collect();
                let s = self.constraints.len();
                if s > cols.len() {
                    report.violations.push(format!(
                        "{s} constraints exceed the {} coordinates they constrain",
                        cols.len()
                    ));
                } else {
                    let jac: Vec<Vec<Expr>> = self
                        .constraints
                        .iter()
                        .map(|c| cols.iter().map(|&x| diff(c, x)).collect())
                        .collect();
                    let mut full = 0usize;
                    let mut valid = 0usize;
                    for _ in 0..SAMPLES {
                        let point = sampler.assignment(&self.table);
                        if let Some(rank) = numeric_rank(&jac, &point) {
                            valid += 1;
                            if rank == s {
                                full += 1;
                            }
                        }
                    }
                    if valid == 0 {
                        report
                            .violations
                            .push("constraint Jacobian is nowhere evaluable".to_string());
                    } else if (full as f64) < 0.9 * (valid as f64) {
                        report.violations.push(format!(
                            "constraint differentials dependent: full rank {s} at only \
                             {full}/{valid} sample points"
                        ));
                    } else {
                        report
                            .notes
                            .push(format!("s = {s}, rank {s} at {full}/{valid} samples"));
                    }
                }
            }
            ProblemKind::ControlledLagrangian => {
                match self.velocity_hessian() {
                    Some(w) => {
                        let mut good = 0usize;
                        let mut valid = 0usize;
                        for _ in 0..SAMPLES {
                            let point = sampler.assignment(&self.table);
                            if let Some(det) = numeric_det(&w, &point) {
                                valid += 1;
                                if det.abs() > 1e-8 {
                                    good += 1;
                                }
                            }
                        }
                        if valid == 0 {
                            report
                                .violations
                                .push("velocity Hessian is nowhere evaluable".to_string());
                        } else if (good as f64) < 0.9 * (valid as f64) {
                            report.violations.push(format!(
                                "velocity Hessian singular: |det| > 1e-8 at only \
                                 {good}/{valid} sample points"
                            ));
                        } else {
                            report.notes.push(format!(
                                "velocity Hessian regular at {good}/{valid} samples"
                            ));
                        }
                    }
                    None => report
                        .violations
                        .push("controlled_lagrangian problem lacks a Lagrangian".to_string()),
                }
            }
        }

        for id in self.table.ids_of_kind(VarKind::Parameter) {
            let spec = self.table.param_spec(id).cloned().unwrap_or_default();
            let name = self.table.name(id);
            if spec.nonzero {
                if let Some(v) = spec.value {
                    if v == 0.0 {
                        report.violations.push(format!(
                            "parameter `{name}` declared nonzero but has value 0"
                        ));
                    }
                }
                if let Some((lo, hi)) = spec.range {
                    if lo <= 0.0 && hi >= 0.0 {
                        report.notes.push(format!(
                            "parameter `{name}` range [{lo}, {hi}] spans 0; sampling \
                             rejects near-zero draws"
                        ));
                    }
                }
            }
        }

        if let Some(t1) = self.boundary.horizon {
            if t1 <= self.boundary.t0 {
                report.violations.push(format!(
                    "boundary horizon T = {t1} does not exceed t0 = {}",
                    self.boundary.t0
                ));
            }
        }

        report
    }

    /// The velocity Hessian `W_ij = ∂²L/∂v^i∂v^j` of a Lagrangian problem.
    fn velocity_hessian(&self) -> Option<Vec<Vec<Expr>>> {
        let lag = self.lagrangian.as_ref()?;
        Some(
            self.velocities
                .iter()
                .map(|&vi| {
                    let dvi = diff(lag, vi);
                    self.velocities.iter().map(|&vj| diff(&dvi, vj)).collect()
                })
                .collect(),
        )
    }
}

pub(crate) fn numeric_rank(rows: &[Vec<Expr>], point: &[f64]) -> Option<usize> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(nrows * ncols);
    for row in rows {
        for e in row {
            data.push(eval_at(e, point).ok()?);
        }
    }
    let m = nalgebra::DMatrix::from_row_slice(nrows, ncols, &data);
    let svd = m.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Some(0);
    }
    Some(
        svd.singular_values
            .iter()
            .filter(|&&s| s > 1e-8 * smax)
            .count(),
    )
}

fn numeric_det(rows: &[Vec<Expr>], point: &[f64]) -> Option<f64> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * n);
    for row in rows {
        for e in row {
            data.push(eval_at(e, point).ok()?);
        }
    }
    Some(nalgebra::DMatrix::from_row_slice(n, n, &data).determinant())
}

/// Re-parse `e` (printed against `from`) in the context of `to`. Used by the
/// lowerings, whose output tables re-register the same coordinate names.
fn rebind(e: &Expr, from: &VarTable, to: &VarTable) -> Result<Expr, ProblemError> {
    Ok(parse(&print_expr(e, from), to)?)
}

/// Lower an explicit problem to the canonical implicit form: one constraint
/// `v^i − F^i = 0` per state, cost and boundary data carried over.
pub fn lower_explicit(p: &Problem) -> Result<Problem, ProblemError> {
    assert_eq!(p.kind, ProblemKind::Explicit, "lower_explicit needs an explicit problem");
    let mut table = VarTable::new();
    let time = table.register("t", VarKind::Time)?;
    let mut states = Vec::new();
    for &q in &p.states {
        states.push(table.register(p.table.name(q), VarKind::State)?);
    }
    let mut velocities = Vec::new();
    for &q in &p.states {
        velocities.push(table.register(&format!("v_{}", p.table.name(q)), VarKind::Velocity)?);
    }
    let mut controls = Vec::new();
    for &u in &p.controls {
        controls.push(table.register(p.table.name(u), VarKind::Control)?);
    }
    for id in p.table.ids_of_kind(VarKind::Parameter) {
        table.register_param(
            p.table.name(id),
            p.table.param_spec(id).cloned().unwrap_or_default(),
        )?;
    }

    let mut constraints = Vec::new();
    for (i, f) in p.dynamics.iter().enumerate() {
        let v = Expr::var(velocities[i]);
        let rhs = rebind(f, &p.table, &table)?;
        constraints.push(Expr::sub(&v, &rhs));
    }
    let cost = rebind(&p.cost, &p.table, &table)?;

    Ok(Problem {
        kind: ProblemKind::Implicit,
        table,
        time,
        states,
        velocities,
        controls,
        dynamics: Vec::new(),
        constraints,
        lagrangian: None,
        forces: Vec::new(),
        cost,
        boundary: p.boundary.clone(),
    })
}

/// Lower a controlled-Lagrangian problem to first-order implicit form.
///
/// The state vector doubles to `(q^i, v^i)` — the old formal velocities
/// become states under their existing `v_<q>` names — with fresh velocities
/// `vbar_<q>` (rate of `q`) and `w_<q>` (rate of `v_<q>`). Constraints:
///
/// * `φ_i`: the forced Euler–Lagrange residual, built as the total time
///   derivative of `∂L/∂v^i` along `q̇ = v, v̇ = w`, minus `∂L/∂q^i`, minus
///   the force;
/// * `φ̄^i = v^i − vbar^i`, tying the doubled state to the velocity of `q`.
///
/// # Errors
///
/// [`ProblemError::SingularLagrangian`] when the velocity Hessian fails its
/// regularity sampling (the `w`-coefficients of `φ` would be unsolvable).
pub fn lower_lagrangian(p: &Problem, seed: u64) -> Result<Problem, ProblemError> {
    assert_eq!(
        p.kind,
        ProblemKind::ControlledLagrangian,
        "lower_lagrangian needs a controlled_lagrangian problem"
    );
    let lag = p
        .lagrangian
        .as_ref()
        .ok_or_else(|| structure("`lagrangian` is required"))?;

    // Regularity gate: reuse the validation sampling.
    let report = p.validate(seed);
    if report
        .violations
        .iter()
        .any(|v| v.contains("velocity Hessian"))
    {
        return Err(ProblemError::SingularLagrangian);
    }

    // Work table: original coordinates plus formal accelerations, so the
    // Euler-Lagrange residual can be built by total differentiation.
    let mut work = p.table.clone();
    let mut accels = Vec::new();
    for &q in &p.states {
        accels.push(work.register(&format!("w_{}", p.table.name(q)), VarKind::Auxiliary)?);
    }
    for (i, &q) in p.states.iter().enumerate() {
        work.set_prolongation(q, Expr::var(p.velocities[i]));
        work.set_prolongation(p.velocities[i], Expr::var(accels[i]));
    }

    // Lowered table: states (q, v), velocities (vbar, w), controls, params.
    let mut table = VarTable::new();
    let time = table.register("t", VarKind::Time)?;
    let mut states = Vec::new();
    for &q in &p.states {
        states.push(table.register(p.table.name(q), VarKind::State)?);
    }
    for &v in &p.velocities {
        states.push(table.register(p.table.name(v), VarKind::State)?);
    }
    let mut velocities = Vec::new();
    for &q in &p.states {
        velocities.push(table.register(&format!("vbar_{}", p.table.name(q)), VarKind::Velocity)?);
    }
    for &q in &p.states {
        velocities.push(table.register(&format!("w_{}", p.table.name(q)), VarKind::Velocity)?);
    }
    let mut controls = Vec::new();
    for &u in &p.controls {
        controls.push(table.register(p.table.name(u), VarKind::Control)?);
    }
    for id in p.table.ids_of_kind(VarKind::Parameter) {
        table.register_param(
            p.table.name(id),
            p.table.param_spec(id).cloned().unwrap_or_default(),
        )?;
    }

    // φ_i = d/dt(∂L/∂v^i) − ∂L/∂q^i − F_i, then φ̄^i = v^i − vbar^i.
    let mut constraints = Vec::new();
    for (i, &q) in p.states.iter().enumerate() {
        let momentum = diff(lag, p.velocities[i]);
        let dtotal = total_derivative(&momentum, &work)?;
        let phi = Expr::sub(&Expr::sub(&dtotal, &diff(lag, q)), &p.forces[i]);
        constraints.push(rebind(&phi, &work, &table)?);
    }
    let n = p.states.len();
    for i in 0..n {
        let v_state = Expr::var(states[n + i]);
        let vbar = Expr::var(velocities[i]);
        constraints.push(Expr::sub(&v_state, &vbar));
    }

    let cost = rebind(&p.cost, &p.table, &table)?;

    Ok(Problem {
        kind: ProblemKind::Implicit,
        table,
        time,
        states,
        velocities,
        controls,
        dynamics: Vec::new(),
        constraints,
        lagrangian: None,
        forces: Vec::new(),
        cost,
        boundary: p.boundary.clone(),
    })
}

/// Composite-Simpson quadrature of the running cost along a uniformly
/// sampled trajectory. `points[k]` is the full coordinate assignment at
/// `times[k]` (indexed by [`VarId::index`] of `problem.table` or any
/// table extending it).
///
/// An even number of samples (odd interval count) is handled by Simpson on
/// the leading intervals and a trapezoid on the last.
///
/// # Errors
///
/// [`ProblemError::Structure`] on fewer than two samples or a non-uniform
/// grid; [`SymError::Domain`] through [`ProblemError::Sym`] if the cost is
/// not evaluable at some sample.
pub fn evaluate_cost(
    problem: &Problem,
    times: &[f64],
    points: &[Vec<f64>],
) -> Result<f64, ProblemError> {
    if times.len() != points.len() {
        return Err(structure("times and points must have equal length"));
    }
    if times.len() < 2 {
        return Err(structure("cost evaluation needs at least two samples"));
    }
    let h = times[1] - times[0];
    if h <= 0.0 {
        return Err(structure("time grid must increase"));
    }
    for k in 1..times.len() {
        let step = times[k] - times[k - 1];
        if (step - h).abs() > 1e-9 * (1.0 + h.abs()) {
            return Err(structure("cost evaluation needs a uniform time grid"));
        }
    }
    let mut values = Vec::with_capacity(points.len());
    for point in points {
        values.push(eval_at(&problem.cost, point).map_err(ProblemError::Sym)?);
    }
    Ok(simpson(&values, h))
}

/// Composite Simpson rule over uniformly spaced samples, with a trapezoid
/// fallback on the final interval when the interval count is odd.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1; // interval count
    let even_intervals = if n % 2 == 0 { n } else { n - 1 };
    let mut total = 0.0;
    if even_intervals >= 2 {
        let mut acc = values[0] + values[even_intervals];
        for (k, &v) in values[1..even_intervals].iter().enumerate() {
            acc += if (k + 1) % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        total += acc * h / 3.0;
    }
    if even_intervals < n {
        total += 0.5 * h * (values[n - 1] + values[n]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{Truth, DEFAULT_SEED};

    pub(crate) const LQ_JSON: &str = r#"{
        "kind": "explicit",
        "states": ["q1"],
        "controls": ["u"],
        "dynamics": {"q1": "u"},
        "cost": "0.5*(q1^2 + u^2)",
        "boundary": {"t0": 0, "T": 1.0, "q0": {"q1": 1.0}, "qT": {"q1": 0.0}}
    }"#;

    pub(crate) const MINACC_JSON: &str = r#"{
        "kind": "controlled_lagrangian",
        "states": ["q1"],
        "controls": ["u"],
        "lagrangian": "0.5*v_q1^2",
        "forces": {"q1": "u"},
        "cost": "0.5*u^2",
        "boundary": {"t0": 0, "T": 1.0, "q0": {"q1": 0.0, "v_q1": 0.0},
                     "qT": {"q1": 1.0, "v_q1": 0.0}}
    }"#;

    #[test]
    fn loads_explicit_problem() {
        let p = Problem::from_json_str(LQ_JSON).unwrap();
        assert_eq!(p.kind, ProblemKind::Explicit);
        assert_eq!(p.states.len(), 1);
        assert!(p.velocities.is_empty());
        assert_eq!(p.boundary.horizon, Some(1.0));
        assert_eq!(p.boundary.value0("q1"), Some(1.0));
        assert!(p.validate(DEFAULT_SEED).is_valid());
    }

    #[test]
    fn rejects_reserved_and_colliding_names() {
        let bad = LQ_JSON.replace("\"u\"", "\"p_x\"").replace("u^2", "p_x^2").replace("\"q1\": \"u\"", "\"q1\": \"p_x\"");
        assert!(matches!(
            Problem::from_json_str(&bad),
            Err(ProblemError::Structure(_))
        ));
        let dup = LQ_JSON.replace("[\"q1\"]", "[\"q1\", \"q1\"]");
        assert!(Problem::from_json_str(&dup).is_err(), "name collision");
    }

    #[test]
    fn implicit_rank_validation() {
        let good = r#"{
            "kind": "implicit",
            "states": ["q1"],
            "controls": ["u"],
            "constraints": ["v_q1 - u"],
            "cost": "0.5*u^2"
        }"#;
        let p = Problem::from_json_str(good).unwrap();
        assert!(p.validate(DEFAULT_SEED).is_valid());

        let dependent = r#"{
            "kind": "implicit",
            "states": ["q1"],
            "controls": ["u"],
            "constraints": ["v_q1 - u", "v_q1 - u"],
            "cost": "0.5*u^2"
        }"#;
        let p = Problem::from_json_str(dependent).unwrap();
        let report = p.validate(DEFAULT_SEED);
        assert!(!report.is_valid());
        assert!(report.violations[0].contains("dependent"));
    }

    #[test]
    fn lowering_explicit_builds_velocity_constraints() {
        let p = Problem::from_json_str(LQ_JSON).unwrap();
        let lowered = lower_explicit(&p).unwrap();
        assert_eq!(lowered.kind, ProblemKind::Implicit);
        assert_eq!(lowered.constraints.len(), 1);
        let expect = parse("v_q1 - u", &lowered.table).unwrap();
        assert_eq!(lowered.constraints[0], expect);
        assert!(lowered.validate(DEFAULT_SEED).is_valid());
    }

    #[test]
    fn lowering_lagrangian_builds_euler_lagrange() {
        let p = Problem::from_json_str(MINACC_JSON).unwrap();
        let lowered = lower_lagrangian(&p, DEFAULT_SEED).unwrap();
        assert_eq!(lowered.states.len(), 2, "(q, v) doubled state");
        assert_eq!(lowered.constraints.len(), 2);
        // φ₁ = w - u, φ̄₁ = v - vbar.
        let phi = parse("w_q1 - u", &lowered.table).unwrap();
        let phibar = parse("v_q1 - vbar_q1", &lowered.table).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let d0 = Expr::sub(&lowered.constraints[0], &phi);
        let d1 = Expr::sub(&lowered.constraints[1], &phibar);
        assert_eq!(s.is_zero(&d0, &lowered.table), Truth::True);
        assert_eq!(s.is_zero(&d1, &lowered.table), Truth::True);
    }

    #[test]
    fn lowering_forced_oscillator() {
        let src = r#"{
            "kind": "controlled_lagrangian",
            "states": ["q1"],
            "controls": ["u"],
            "lagrangian": "0.5*v_q1^2 - 0.5*q1^2",
            "forces": {"q1": "u"},
            "cost": "0.5*u^2"
        }"#;
        let p = Problem::from_json_str(src).unwrap();
        let lowered = lower_lagrangian(&p, DEFAULT_SEED).unwrap();
        let phi = parse("w_q1 + q1 - u", &lowered.table).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let d = Expr::sub(&lowered.constraints[0], &phi);
        assert_eq!(s.is_zero(&d, &lowered.table), Truth::True);
    }

    #[test]
    fn singular_lagrangian_rejected() {
        let src = r#"{
            "kind": "controlled_lagrangian",
            "states": ["q1"],
            "controls": ["u"],
            "lagrangian": "v_q1",
            "forces": {"q1": "u"},
            "cost": "0.5*u^2"
        }"#;
        let p = Problem::from_json_str(src).unwrap();
        assert!(matches!(
            lower_lagrangian(&p, DEFAULT_SEED),
            Err(ProblemError::SingularLagrangian)
        ));
    }

    #[test]
    fn simpson_quadrature() {
        // 𝕃 = 1 over [0, 2] → 2.
        let ones = vec![1.0; 5];
        assert!((simpson(&ones, 0.5) - 2.0).abs() < 1e-14);
        // 𝕃 = t over [0, 1] → 0.5, exact for Simpson, even with the
        // trapezoid tail (t is linear).
        let n = 7usize; // 6 samples → 5 intervals → odd, exercises fallback
        let h = 1.0 / (n as f64 - 1.0);
        let vals: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        assert!((simpson(&vals, h) - 0.5).abs() < 1e-12);
        // Cubic integrand: Simpson is exact on even interval counts.
        let m = 9usize;
        let h = 1.0 / (m as f64 - 1.0);
        let vals: Vec<f64> = (0..m).map(|k| (k as f64 * h).powi(3)).collect();
        assert!((simpson(&vals, h) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn evaluate_cost_on_grid() {
        let p = Problem::from_json_str(LQ_JSON).unwrap();
        // Constant cost 0.5*(1 + 0) along q1 = 1, u = 0 for T = 1.
        let n = 11usize;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let width = p.table.len();
        let points: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                let mut row = vec![0.0; width];
                row[p.time.index()] = t;
                row[p.states[0].index()] = 1.0;
                row
            })
            .collect();
        let j = evaluate_cost(&p, &times, &points).unwrap();
        assert!((j - 0.5).abs() < 1e-12);
    }
}
