//! Hamiltonian construction on the unified phase space.
//!
//! Given a problem in explicit or implicit form, this module extends the
//! coordinate table with momenta `p_<state>` (one per state), the energy
//! momentum `p` conjugate to time, and — for implicit problems — one
//! multiplier `lam_α` per constraint. It then builds:
//!
//! * the Hamiltonian `H = p + Σ p_i v^i − 𝕃` (implicit) or
//!   `H = p + Σ p_i F^i − 𝕃` (explicit), which must vanish along extremals
//!   (normal extremals only: the cost enters with multiplier −1, hard-coded);
//! * the evolution-field ansatz: one rate slot per coordinate
//!   (`A_<state>`, `C_<velocity>`, `B_<control>`, `D_<state>`/`C_<state>`
//!   for momenta, `E` for the energy momentum), with the time rate pinned
//!   to 1. Slots the structure determines immediately are filled here
//!   (`A^i`, the momentum rates, `E`); the rest are unknowns for the
//!   constraint engine;
//! * the generation-0 constraint material: the primaries (`Ψ^α` and `H`),
//!   the momentum definitions `p_i = ∂𝕃/∂v^i − Σ λ_α ∂Ψ^α/∂v^i`, and the
//!   stationarity conditions in the controls.
//!
//! The slots double as prolongations on the extended table, so a tangency
//! derivative `Z(c)` is literally a total time derivative.

use thiserror::Error;

use crate::constraint_engine::{solve_linear, EngineError};
use crate::problem::{lower_lagrangian, Problem, ProblemError, ProblemKind};
use crate::symexpr::{diff, Expr, Sampler, SymError, Truth, VarId, VarKind};

/// Where a constraint entered the derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Primary,
    MomentumDefinition,
    Stationarity,
    Tangency,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Origin::Primary => "primary",
            Origin::MomentumDefinition => "momentum-definition",
            Origin::Stationarity => "stationarity",
            Origin::Tangency => "tangency",
        };
        f.write_str(s)
    }
}

/// A constraint with a report name and provenance tag.
#[derive(Debug, Clone)]
pub struct NamedConstraint {
    pub name: String,
    pub expr: Expr,
    pub origin: Origin,
}

impl NamedConstraint {
    pub fn new(name: impl Into<String>, expr: Expr, origin: Origin) -> Self {
        NamedConstraint {
            name: name.into(),
            expr,
            origin,
        }
    }
}

/// One rate slot of the evolution-field ansatz: `coord`'s time derivative is
/// the symbol `symbol` until the derivation pins it down.
#[derive(Debug, Clone, Copy)]
pub struct Slot {
    pub coord: VarId,
    pub symbol: VarId,
}

#[derive(Debug, Error)]
pub enum PontryaginError {
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Engine(#[from] Box<EngineError>),
    #[error("energy tangency identity failed: Z(H) plus the multiplier combination of Z(Psi) does not vanish modulo the admitted relations")]
    IdentityViolation,
}

/// The assembled unified-space system: extended table, Hamiltonian, ansatz,
/// and generation-0 constraint material. Immutable once built.
#[derive(Debug, Clone)]
pub struct PontryaginSystem {
    /// The underlying problem (implicit problems keep their constraints
    /// here; explicit problems their dynamics). Controlled-Lagrangian
    /// problems are lowered before reaching this type.
    pub problem: Problem,
    /// `problem.table` extended with momenta, energy momentum, multipliers,
    /// and slot symbols; prolongations map each coordinate to its slot.
    pub table: crate::symexpr::VarTable,
    pub time: VarId,
    /// Momenta `p_<state>`, parallel to `problem.states`.
    pub momenta: Vec<VarId>,
    /// The energy momentum `p` conjugate to time.
    pub energy: VarId,
    /// Multipliers `lam_α`, parallel to `problem.constraints` (empty for
    /// explicit systems).
    pub multipliers: Vec<VarId>,
    /// One slot per non-time coordinate, in table coordinate order.
    pub slots: Vec<Slot>,
    /// Direct slot assignments the structure fixes without iteration:
    /// `A^i`, the momentum rates, and `E`. Multiplier symbols may appear in
    /// the right-hand sides; the engine substitutes them once solved.
    pub assignments: Vec<(VarId, Expr)>,
    pub hamiltonian: Expr,
    /// `Ψ^α` (implicit only) followed by the energy constraint `H`.
    pub primaries: Vec<NamedConstraint>,
    /// Momentum-definition equations (implicit only), multiplier-bearing.
    pub momentum_defs: Vec<NamedConstraint>,
    /// Stationarity conditions, one per control; multiplier-bearing for
    /// implicit systems.
    pub stationarity: Vec<NamedConstraint>,
}

/// Verdict of the control-Hessian rank test.
#[derive(Debug, Clone)]
pub struct RegularityCertificate {
    pub regular: bool,
    /// Number of controls `m` (the rank needed for regularity).
    pub controls: usize,
    pub min_rank: usize,
    pub max_rank: usize,
    /// Points where the Hessian was evaluable / points sampled.
    pub valid_samples: usize,
    pub samples: usize,
}

impl std::fmt::Display for RegularityCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "verdict: {}",
            if self.regular { "regular" } else { "singular" }
        )?;
        writeln!(f, "controls: {}", self.controls)?;
        writeln!(
            f,
            "hessian rank: min {}, max {} over {}/{} evaluable samples",
            self.min_rank, self.max_rank, self.valid_samples, self.samples
        )
    }
}

impl PontryaginSystem {
    /// The rate-slot symbol for `coord`, if `coord` is a non-time coordinate.
    pub fn slot_symbol(&self, coord: VarId) -> Option<VarId> {
        self.slots
            .iter()
            .find(|s| s.coord == coord)
            .map(|s| s.symbol)
    }

    /// All non-time coordinates, in slot order.
    pub fn coordinates(&self) -> Vec<VarId> {
        self.slots.iter().map(|s| s.coord).collect()
    }

    /// Slot symbols not filled by a direct assignment, then multipliers —
    /// the unknowns the constraint chain must determine.
    pub fn unknowns(&self) -> Vec<VarId> {
        let mut out: Vec<VarId> = self
            .slots
            .iter()
            .map(|s| s.symbol)
            .filter(|sym| !self.assignments.iter().any(|(a, _)| a == sym))
            .collect();
        out.extend(self.multipliers.iter().copied());
        out
    }

    /// Every generation-0 constraint in report order: primaries, momentum
    /// definitions, stationarity.
    pub fn generation_zero(&self) -> Vec<NamedConstraint> {
        self.primaries
            .iter()
            .chain(self.momentum_defs.iter())
            .chain(self.stationarity.iter())
            .cloned()
            .collect()
    }

    /// Control-Hessian regularity test.
    ///
    /// For explicit systems the matrix is `∂²H/∂u^a∂u^b`. For implicit
    /// systems the multipliers are first solved from the momentum
    /// definitions alone; the solved values are substituted into the
    /// stationarity conditions and the matrix is the control Jacobian of the
    /// result (multipliers the momentum definitions leave free are sampled
    /// as extra symbols, which cannot raise the measured rank spuriously:
    /// regularity demands full rank at *every* sample).
    ///
    /// # Errors
    ///
    /// Propagates linear-solver failures; undecidable if no sample point
    /// evaluates.
    pub fn regularity(&self, sampler: &mut Sampler) -> Result<RegularityCertificate, PontryaginError> {
        let phi: Vec<Expr> = if self.multipliers.is_empty() {
            self.stationarity.iter().map(|c| c.expr.clone()).collect()
        } else {
            let eqs: Vec<Expr> = self.momentum_defs.iter().map(|c| c.expr.clone()).collect();
            let solution = solve_linear(&eqs, &self.multipliers, &self.table, sampler)
                .map_err(Box::new)?;
            self.stationarity
                .iter()
                .map(|c| c.expr.subst_map(&solution.solved))
                .collect()
        };
        let m = self.problem.controls.len();
        let hessian: Vec<Vec<Expr>> = phi
            .iter()
            .map(|row| {
                self.problem
                    .controls
                    .iter()
                    .map(|&u| diff(row, u))
                    .collect()
            })
            .collect();

        const SAMPLES: usize = 32;
        let mut min_rank = usize::MAX;
        let mut max_rank = 0usize;
        let mut valid = 0usize;
        for _ in 0..SAMPLES {
            let point = sampler.assignment(&self.table);
            if let Some(rank) = crate::problem::numeric_rank(&hessian, &point) {
                valid += 1;
                min_rank = min_rank.min(rank);
                max_rank = max_rank.max(rank);
            }
        }
        if valid == 0 {
            return Err(PontryaginError::Sym(SymError::Undecidable {
                context: "control Hessian rank".to_string(),
            }));
        }
        Ok(RegularityCertificate {
            regular: min_rank == m,
            controls: m,
            min_rank,
            max_rank,
            valid_samples: valid,
            samples: SAMPLES,
        })
    }
}

/// The structurally determined part of the evolution field, with the
/// multipliers resolved as far as generation 0 allows, plus the verdict of
/// the energy-tangency consistency identity.
#[derive(Debug, Clone)]
pub struct AdjointReport {
    /// Slot symbol → rate, reduced modulo the generation-0 relations (so
    /// solved multipliers are substituted). Unassigned slots are absent.
    pub assignments: Vec<(VarId, Expr)>,
    /// Multiplier → solved value in coordinate form, or `None` when
    /// generation 0 leaves it undetermined.
    pub multipliers: Vec<(VarId, Option<Expr>)>,
    /// Verdict of `Z(H) + Σ λ_α Z(Ψ^α) ≡ 0` (explicit: `Z(H) ≡ 0`) modulo
    /// the generation-0 relations.
    pub identity: Truth,
}

impl PontryaginSystem {
    /// Resolve the adjoint structure: run the generation-0 setup (direct
    /// slot assignments, primary admission, multiplier solve) and report
    /// the momentum/energy rates in coordinate form together with the
    /// consistency identity verdict.
    ///
    /// # Errors
    ///
    /// [`PontryaginError::IdentityViolation`] if the identity check fails
    /// outright (an undecidable verdict is reported, not fatal); solver
    /// errors propagate.
    pub fn adjoint_equations(
        &self,
        sampler: &mut Sampler,
    ) -> Result<AdjointReport, PontryaginError> {
        let gen0 = crate::constraint_engine::generation_zero(self, sampler).map_err(Box::new)?;
        if matches!(gen0.identity, Truth::False) {
            return Err(PontryaginError::IdentityViolation);
        }
        let mask = crate::constraint_engine::unknown_mask(&self.table);
        let assignments = self
            .assignments
            .iter()
            .map(|(sym, _)| (*sym, gen0.elimination.reduce(&Expr::var(*sym))))
            .collect();
        let multipliers = self
            .multipliers
            .iter()
            .map(|&lam| {
                let value = gen0.elimination.reduce(&Expr::var(lam));
                let solved = (value.var_mask() & mask == 0).then_some(value);
                (lam, solved)
            })
            .collect();
        Ok(AdjointReport {
            assignments,
            multipliers,
            identity: gen0.identity,
        })
    }
}

/// Build the unified-space system for any problem kind. Controlled
/// Lagrangian problems are lowered first (using `seed` for the regularity
/// sampling); explicit problems are built directly on (t, q, u, p, p_i).
pub fn build(problem: &Problem, seed: u64) -> Result<PontryaginSystem, PontryaginError> {
    match problem.kind {
        ProblemKind::Explicit => build_explicit(problem),
        ProblemKind::Implicit => build_implicit(problem),
        ProblemKind::ControlledLagrangian => {
            let lowered = lower_lagrangian(problem, seed)?;
            build_implicit(&lowered)
        }
    }
}

/// Build the system for an explicit problem: `H = p + Σ p_i F^i − 𝕃` with
/// slots `A^i` (state rates, filled with `F^i`), `B^a` (control rates,
/// unknown), `C_<state>` (momentum rates, filled with `∂𝕃/∂q^i − Σ p_j
/// ∂F^j/∂q^i`), and `E` (energy-momentum rate, filled with `−∂H/∂t`).
pub fn build_explicit(problem: &Problem) -> Result<PontryaginSystem, PontryaginError> {
    assert_eq!(problem.kind, ProblemKind::Explicit);
    let mut table = problem.table.clone();
    let mut momenta = Vec::new();
    for &q in &problem.states {
        let name = format!("p_{}", problem.table.name(q));
        momenta.push(table.register(&name, VarKind::Momentum)?);
    }
    let energy = table.register("p", VarKind::MomentumP)?;

    // H = p + Σ p_i F^i − 𝕃.
    let mut h = Expr::var(energy);
    for (i, f) in problem.dynamics.iter().enumerate() {
        h = Expr::add(&h, &Expr::mul(&Expr::var(momenta[i]), f));
    }
    let h = Expr::sub(&h, &problem.cost);

    // Slots; coordinate order: states, controls, momenta, energy momentum.
    let mut slots = Vec::new();
    for &q in &problem.states {
        let sym = table.register(&format!("A_{}", problem.table.name(q)), VarKind::Auxiliary)?;
        slots.push(Slot { coord: q, symbol: sym });
    }
    for &u in &problem.controls {
        let sym = table.register(&format!("B_{}", problem.table.name(u)), VarKind::Auxiliary)?;
        slots.push(Slot { coord: u, symbol: sym });
    }
    for (i, &q) in problem.states.iter().enumerate() {
        let sym = table.register(&format!("C_{}", problem.table.name(q)), VarKind::Auxiliary)?;
        slots.push(Slot {
            coord: momenta[i],
            symbol: sym,
        });
    }
    let e_sym = table.register("E", VarKind::Auxiliary)?;
    slots.push(Slot {
        coord: energy,
        symbol: e_sym,
    });
    for slot in &slots {
        table.set_prolongation(slot.coord, Expr::var(slot.symbol));
    }

    // Direct assignments: A^i = F^i, C_i = ∂𝕃/∂q^i − Σ p_j ∂F^j/∂q^i,
    // E = −∂H/∂t = ∂𝕃/∂t − Σ p_j ∂F^j/∂t.
    let mut assignments = Vec::new();
    for (i, f) in problem.dynamics.iter().enumerate() {
        assignments.push((slots[i].symbol, f.clone()));
    }
    let adjoint_rate = |x: VarId| -> Expr {
        let mut rate = diff(&problem.cost, x);
        for (j, fj) in problem.dynamics.iter().enumerate() {
            rate = Expr::sub(&rate, &Expr::mul(&Expr::var(momenta[j]), &diff(fj, x)));
        }
        rate
    };
    let n = problem.states.len();
    let m = problem.controls.len();
    for (i, &q) in problem.states.iter().enumerate() {
        assignments.push((slots[n + m + i].symbol, adjoint_rate(q)));
    }
    assignments.push((e_sym, adjoint_rate(problem.time)));

    // φ_a = ∂H/∂u^a; the energy constraint is the only primary.
    let stationarity = problem
        .controls
        .iter()
        .map(|&u| {
            NamedConstraint::new(
                format!("phi_{}", problem.table.name(u)),
                diff(&h, u),
                Origin::Stationarity,
            )
        })
        .collect();

    Ok(PontryaginSystem {
        problem: problem.clone(),
        time: problem.time,
        momenta,
        energy,
        multipliers: Vec::new(),
        slots,
        assignments,
        primaries: vec![NamedConstraint::new("H", h.clone(), Origin::Primary)],
        momentum_defs: Vec::new(),
        stationarity,
        hamiltonian: h,
        table,
    })
}

/// Build the system for an implicit problem: `H = p + Σ p_i v^i − 𝕃` with
/// slots `A^i` (state rates, filled with `v^i`), `C_<velocity>` (velocity
/// rates, unknown), `B^a` (control rates, unknown), `D_<state>` (momentum
/// rates, filled with `∂𝕃/∂q^i − Σ λ_α ∂Ψ^α/∂q^i`), and `E` (filled with
/// `∂𝕃/∂t − Σ λ_α ∂Ψ^α/∂t`). Generation-0 constraints: the `Ψ^α` and `H`
/// (primary), the momentum definitions, and stationarity.
pub fn build_implicit(problem: &Problem) -> Result<PontryaginSystem, PontryaginError> {
    assert_eq!(problem.kind, ProblemKind::Implicit);
    let mut table = problem.table.clone();
    let mut momenta = Vec::new();
    for &q in &problem.states {
        let name = format!("p_{}", problem.table.name(q));
        momenta.push(table.register(&name, VarKind::Momentum)?);
    }
    let energy = table.register("p", VarKind::MomentumP)?;
    let mut multipliers = Vec::new();
    for alpha in 1..=problem.constraints.len() {
        multipliers.push(table.register(&format!("lam_{alpha}"), VarKind::Multiplier)?);
    }

    // H = p + Σ p_i v^i − 𝕃.
    let mut h = Expr::var(energy);
    for (i, &v) in problem.velocities.iter().enumerate() {
        h = Expr::add(&h, &Expr::mul(&Expr::var(momenta[i]), &Expr::var(v)));
    }
    let h = Expr::sub(&h, &problem.cost);

    // Slots; coordinate order: states, velocities, controls, momenta, energy.
    let mut slots = Vec::new();
    for &q in &problem.states {
        let sym = table.register(&format!("A_{}", problem.table.name(q)), VarKind::Auxiliary)?;
        slots.push(Slot { coord: q, symbol: sym });
    }
    for &v in &problem.velocities {
        let sym = table.register(&format!("C_{}", problem.table.name(v)), VarKind::Auxiliary)?;
        slots.push(Slot { coord: v, symbol: sym });
    }
    for &u in &problem.controls {
        let sym = table.register(&format!("B_{}", problem.table.name(u)), VarKind::Auxiliary)?;
        slots.push(Slot { coord: u, symbol: sym });
    }
    let n = problem.states.len();
    for (i, &q) in problem.states.iter().enumerate() {
        let sym = table.register(&format!("D_{}", problem.table.name(q)), VarKind::Auxiliary)?;
        slots.push(Slot {
            coord: momenta[i],
            symbol: sym,
        });
    }
    let e_sym = table.register("E", VarKind::Auxiliary)?;
    slots.push(Slot {
        coord: energy,
        symbol: e_sym,
    });
    for slot in &slots {
        table.set_prolongation(slot.coord, Expr::var(slot.symbol));
    }

    // Direct assignments. The momentum rates and E carry multiplier symbols;
    // the engine reduces them once the multipliers are solved.
    let multiplier_comb = |x: VarId| -> Expr {
        // ∂𝕃/∂x − Σ λ_α ∂Ψ^α/∂x
        let mut acc = diff(&problem.cost, x);
        for (alpha, psi) in problem.constraints.iter().enumerate() {
            acc = Expr::sub(
                &acc,
                &Expr::mul(&Expr::var(multipliers[alpha]), &diff(psi, x)),
            );
        }
        acc
    };
    let mut assignments = Vec::new();
    for (i, &v) in problem.velocities.iter().enumerate() {
        assignments.push((slots[i].symbol, Expr::var(v)));
    }
    let m = problem.controls.len();
    for (i, &q) in problem.states.iter().enumerate() {
        assignments.push((slots[2 * n + m + i].symbol, multiplier_comb(q)));
    }
    assignments.push((e_sym, multiplier_comb(problem.time)));

    // Generation-0 constraint material.
    let mut primaries: Vec<NamedConstraint> = problem
        .constraints
        .iter()
        .enumerate()
        .map(|(alpha, psi)| {
            NamedConstraint::new(format!("Psi_{}", alpha + 1), psi.clone(), Origin::Primary)
        })
        .collect();
    primaries.push(NamedConstraint::new("H", h.clone(), Origin::Primary));

    // Momentum definitions: p_i − ∂𝕃/∂v^i + Σ λ_α ∂Ψ^α/∂v^i = 0.
    let momentum_defs = problem
        .states
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let expr = Expr::sub(&Expr::var(momenta[i]), &multiplier_comb(problem.velocities[i]));
            NamedConstraint::new(
                format!("mu_{}", problem.table.name(q)),
                expr,
                Origin::MomentumDefinition,
            )
        })
        .collect();

    // Stationarity: ∂𝕃/∂u^a − Σ λ_α ∂Ψ^α/∂u^a = 0.
    let stationarity = problem
        .controls
        .iter()
        .map(|&u| {
            NamedConstraint::new(
                format!("phi_{}", problem.table.name(u)),
                multiplier_comb(u),
                Origin::Stationarity,
            )
        })
        .collect();

    Ok(PontryaginSystem {
        problem: problem.clone(),
        time: problem.time,
        momenta,
        energy,
        multipliers,
        slots,
        assignments,
        primaries,
        momentum_defs,
        stationarity,
        hamiltonian: h,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::lower_explicit;
    use crate::symexpr::{parse, Sampler, Truth, DEFAULT_SEED};

    const LQ_JSON: &str = r#"{
        "kind": "explicit",
        "states": ["q1"],
        "controls": ["u"],
        "dynamics": {"q1": "u"},
        "cost": "0.5*(q1^2 + u^2)"
    }"#;

    const DESCRIPTOR_JSON: &str = r#"{
        "kind": "implicit",
        "states": ["q1", "q2", "q3"],
        "controls": ["u"],
        "constraints": ["q1 + b1*u - v_q2", "q2 + b2*u - v_q3", "q3 + b3*u"],
        "cost": "0.5*(a1*q1^2 + a2*q2^2 + a3*q3^2 + r*u^2)",
        "params": {
            "a1": {"value": 1.0}, "a2": {"value": 1.0}, "a3": {"value": 1.0},
            "b1": {"value": 1.0}, "b2": {"value": 1.0},
            "b3": {"value": 1.0, "nonzero": true},
            "r":  {"value": 1.0, "nonzero": true}
        }
    }"#;

    fn assert_zero(e: &Expr, table: &crate::symexpr::VarTable) {
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        assert_eq!(s.is_zero(e, table), Truth::True, "expected zero: {e:?}");
    }

    #[test]
    fn explicit_hamiltonian_and_stationarity() {
        let p = Problem::from_json_str(LQ_JSON).unwrap();
        let sys = build_explicit(&p).unwrap();
        let expect = parse("p + p_q1*u - 0.5*(q1^2 + u^2)", &sys.table).unwrap();
        assert_zero(&Expr::sub(&sys.hamiltonian, &expect), &sys.table);
        assert_eq!(sys.stationarity.len(), 1);
        let phi = parse("p_q1 - u", &sys.table).unwrap();
        assert_zero(&Expr::sub(&sys.stationarity[0].expr, &phi), &sys.table);
        // Unknowns: just B_u.
        let unknowns = sys.unknowns();
        assert_eq!(unknowns.len(), 1);
        assert_eq!(sys.table.name(unknowns[0]), "B_u");
    }

    #[test]
    fn implicit_hamiltonian_and_momentum_defs() {
        let p = Problem::from_json_str(DESCRIPTOR_JSON).unwrap();
        let sys = build_implicit(&p).unwrap();
        let expect = parse(
            "p + p_q1*v_q1 + p_q2*v_q2 + p_q3*v_q3 \
             - 0.5*(a1*q1^2 + a2*q2^2 + a3*q3^2 + r*u^2)",
            &sys.table,
        )
        .unwrap();
        assert_zero(&Expr::sub(&sys.hamiltonian, &expect), &sys.table);
        assert_eq!(sys.primaries.len(), 4);
        assert_eq!(sys.momentum_defs.len(), 3);
        // mu_q2: p_q2 + λ_1 ∂Ψ¹/∂v_q2 = p_q2 − λ_1.
        let mu2 = parse("p_q2 - lam_1", &sys.table).unwrap();
        assert_zero(&Expr::sub(&sys.momentum_defs[1].expr, &mu2), &sys.table);
        // Stationarity: r·u − λ_1 b1 − λ_2 b2 − λ_3 b3.
        let phi = parse("r*u - lam_1*b1 - lam_2*b2 - lam_3*b3", &sys.table).unwrap();
        assert_zero(&Expr::sub(&sys.stationarity[0].expr, &phi), &sys.table);
        // Unknowns: C_v_q1..3, B_u, lam_1..3.
        assert_eq!(sys.unknowns().len(), 7);
    }

    #[test]
    fn explicit_regularity_lq() {
        let p = Problem::from_json_str(LQ_JSON).unwrap();
        let sys = build_explicit(&p).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let cert = sys.regularity(&mut s).unwrap();
        assert!(cert.regular);
        assert_eq!((cert.min_rank, cert.max_rank), (1, 1));
    }

    #[test]
    fn implicit_regularity_descriptor() {
        let p = Problem::from_json_str(DESCRIPTOR_JSON).unwrap();
        let sys = build_implicit(&p).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let cert = sys.regularity(&mut s).unwrap();
        assert!(cert.regular, "{cert}");
    }

    #[test]
    fn singular_when_cost_and_dynamics_linear_in_u() {
        let src = r#"{
            "kind": "explicit",
            "states": ["q1"],
            "controls": ["u"],
            "dynamics": {"q1": "u"},
            "cost": "q1^2 + u"
        }"#;
        let p = Problem::from_json_str(src).unwrap();
        let sys = build_explicit(&p).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let cert = sys.regularity(&mut s).unwrap();
        assert!(!cert.regular);
        assert_eq!(cert.max_rank, 0);
    }

    #[test]
    fn adjoint_report_resolves_multipliers_and_identity() {
        let p = Problem::from_json_str(DESCRIPTOR_JSON).unwrap();
        let sys = build_implicit(&p).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let report = sys.adjoint_equations(&mut s).unwrap();
        assert!(report.identity.is_true());
        // λ_1 = p_q2 and λ_2 = p_q3 come from the momentum definitions;
        // λ_3 from stationarity.
        let lam1 = report.multipliers[0].1.as_ref().expect("lam_1 solved");
        let want = parse("p_q2", &sys.table).unwrap();
        assert_zero(&Expr::sub(lam1, &want), &sys.table);
        assert!(report.multipliers[2].1.is_some());
        // D_q1 rate reduces to a1*q1 − lam_1 = a1*q1 − p_q2.
        let d_q1 = sys.table.lookup("D_q1").unwrap();
        let (_, rate) = report
            .assignments
            .iter()
            .find(|(sym, _)| *sym == d_q1)
            .expect("D_q1 assigned");
        let want = parse("a1*q1 - p_q2", &sys.table).unwrap();
        assert_zero(&Expr::sub(rate, &want), &sys.table);
    }

    #[test]
    fn lowered_hamiltonian_matches_explicit_after_substitution() {
        let p = Problem::from_json_str(LQ_JSON).unwrap();
        let lowered = lower_explicit(&p).unwrap();
        let sys = build_implicit(&lowered).unwrap();
        // Substituting v = F (here v_q1 = u) into the implicit H must yield
        // the explicit H (printed over compatible names).
        let v = sys.table.lookup("v_q1").unwrap();
        let u = sys.table.lookup("u").unwrap();
        let substituted = sys.hamiltonian.subst(v, &Expr::var(u));
        let expect = parse("p + p_q1*u - 0.5*(q1^2 + u^2)", &sys.table).unwrap();
        assert_zero(&Expr::sub(&substituted, &expect), &sys.table);
    }
}
