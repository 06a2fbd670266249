//! The presymplectic constraint algorithm.
//!
//! Starting from the generation-0 material assembled by
//! [`crate::pontryagin`] — primaries `Ψ^α` and `H`, momentum definitions,
//! stationarity conditions — the engine iterates tangency: every admitted
//! constraint `c` must satisfy `Z(c) = 0` along the evolution field `Z`,
//! where the unknown components of `Z` (the rate slots the structure did
//! not fix, plus the multipliers) are solved for *linearly*. Tangency
//! residuals that no unknown can absorb become the next generation of
//! constraints, and the loop repeats until
//!
//! * **determined** — no new constraints and every unknown resolved;
//! * **inconsistent** — a residual reduces to a nonzero constant, so no
//!   extremal exists generically; or
//! * **exhausted** — the iteration stalls or hits the generation cap with
//!   unknowns left over.
//!
//! All decisions that require knowing whether an expression vanishes (pivot
//! admissibility, residual triviality, duplicate detection) are made by
//! seeded numeric sampling ([`Sampler`]), so the whole derivation is
//! deterministic for a fixed seed. Bookkeeping lives in [`Elimination`]: an
//! ordered triangular rewrite system `x := e` that both records solved
//! unknowns and keeps each generation expressed in the surviving free
//! coordinates.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::pontryagin::{NamedConstraint, Origin, PontryaginSystem};
use crate::symexpr::{
    diff, eval_at, print_canonical, total_derivative, Expr, Sampler, SymError, Truth, VarId,
    VarKind, VarTable,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("equation `{equation}` is not affine in unknown `{unknown}`")]
    NonAffine { unknown: String, equation: String },
    #[error("inconsistent system: residual `{residual}` cannot vanish")]
    Inconsistent { residual: String },
    #[error("singular linear system, needs case split: coefficient of `{unknown}` in `{equation}` vanishes on part of the domain")]
    Singular { unknown: String, equation: String },
    #[error("constraint `{name}` retains an unsolved multiplier or slot symbol")]
    UnresolvedUnknown { name: String },
    #[error("chain status is `{status}`, not determined")]
    NotDetermined { status: String },
    #[error("projection cannot match constraint `{name}` to a dependent coordinate")]
    Projection { name: String },
    #[error("tangency certificate failed for constraint `{name}`")]
    Tangency { name: String },
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// Bitmask of every unknown symbol (rate slots and multipliers).
pub(crate) fn unknown_mask(table: &VarTable) -> u128 {
    table
        .ids()
        .filter(|&id| matches!(table.kind(id), VarKind::Auxiliary | VarKind::Multiplier))
        .fold(0u128, |m, id| m | (1u128 << id.index()))
}

/// True when `e` involves no coordinates at all (parameters and constants
/// only), so `e = 0` is generically impossible unless `e` vanishes.
fn coordinate_free(e: &Expr, table: &VarTable) -> bool {
    e.variables()
        .iter()
        .all(|&v| table.kind(v) == VarKind::Parameter)
}

/// Preference order when a constraint is used to eliminate a coordinate.
fn elimination_rank(kind: VarKind) -> Option<u8> {
    match kind {
        VarKind::Momentum => Some(0),
        VarKind::MomentumP => Some(1),
        VarKind::Velocity => Some(2),
        VarKind::State => Some(3),
        VarKind::Control => Some(4),
        _ => None,
    }
}

/// Preference order when picking the dependent coordinate a projection
/// solves a constraint for. The energy constraint is the only one touching
/// the energy momentum, so putting [`VarKind::MomentumP`] first keeps it
/// from stealing a momentum the shooting solver needs free.
fn dependent_rank(kind: VarKind) -> Option<u8> {
    match kind {
        VarKind::MomentumP => Some(0),
        VarKind::Momentum => Some(1),
        VarKind::Velocity => Some(2),
        VarKind::Control => Some(3),
        _ => None,
    }
}

/// Solve `a·x + b = 0` for `x` given `coeff = a` (independent of `x`):
/// returns `−(e|ₓ₌₀)/a` with the constant-coefficient cases folded.
fn isolate(e: &Expr, x: VarId, coeff: &Expr) -> Expr {
    let b = e.subst(x, &Expr::zero());
    match coeff.as_const() {
        Some(c) if c == 1.0 => Expr::neg(&b),
        Some(c) if c == -1.0 => b,
        Some(c) => Expr::mul(&Expr::constant(-1.0 / c), &b),
        None => Expr::div(&Expr::neg(&b), coeff),
    }
}

// ---------------------------------------------------------------------------
// Elimination
// ---------------------------------------------------------------------------

/// An ordered triangular rewrite system `x := e`.
///
/// Invariant: at insertion time a rule's right-hand side is reduced against
/// the existing rules, so it references only variables that are unmapped *at
/// that moment*. Variables mapped later may still appear; [`Self::reduce`]
/// therefore iterates substitution passes to a fixpoint, which exists
/// because rule dependencies always point forward in insertion time.
#[derive(Debug, Clone, Default)]
pub struct Elimination {
    rules: Vec<(VarId, Expr)>,
    mapped: u128,
}

impl Elimination {
    pub fn new() -> Self {
        Elimination::default()
    }

    pub fn rules(&self) -> &[(VarId, Expr)] {
        &self.rules
    }

    pub fn lookup(&self, v: VarId) -> Option<&Expr> {
        self.rules.iter().find(|(id, _)| *id == v).map(|(_, e)| e)
    }

    pub fn is_mapped(&self, v: VarId) -> bool {
        self.mapped & (1u128 << v.index()) != 0
    }

    /// Rewrite `e` modulo the rules, to a fixpoint.
    pub fn reduce(&self, e: &Expr) -> Expr {
        let mut cur = e.clone();
        for _ in 0..self.rules.len() + 2 {
            if cur.var_mask() & self.mapped == 0 {
                break;
            }
            let next = cur.subst_map(&self.rules);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    /// Register `var := rhs` (reducing `rhs` first). Rejects remapping an
    /// already-mapped variable and self-referential rules.
    ///
    /// # Errors
    ///
    /// [`EngineError::Projection`]-class misuse is a caller bug and
    /// surfaces as `UnresolvedUnknown`-style errors upstream; here the only
    /// failures are a duplicate or cyclic rule.
    pub fn add_rule(&mut self, var: VarId, rhs: &Expr, table: &VarTable) -> Result<(), EngineError> {
        let reduced = self.reduce(rhs);
        if self.is_mapped(var) || reduced.depends_on(var) {
            return Err(EngineError::UnresolvedUnknown {
                name: table.name(var).to_string(),
            });
        }
        self.mapped |= 1u128 << var.index();
        self.rules.push((var, reduced));
        Ok(())
    }

    /// Try to turn the (already reduced) constraint `c = 0` into a rewrite
    /// rule for one coordinate: the candidate must enter affinely with a
    /// coefficient that never vanishes on sampled points. Preference:
    /// parameter-constant coefficient first, then momentum > energy
    /// momentum > velocity > state > control, then coefficient size, then
    /// registration order. Returns the eliminated coordinate, or `None` if
    /// no coordinate qualifies (the constraint simply stays).
    pub fn try_eliminate(
        &mut self,
        c: &Expr,
        table: &VarTable,
        sampler: &mut Sampler,
    ) -> Option<VarId> {
        let mut best: Option<((u8, u8, usize, usize), VarId, Expr)> = None;
        for v in c.variables() {
            let Some(kind_rank) = elimination_rank(table.kind(v)) else {
                continue;
            };
            if self.is_mapped(v) {
                continue; // reduced exprs cannot contain mapped vars, but be safe
            }
            let coeff = diff(c, v);
            if !sampler.is_zero(&diff(&coeff, v), table).is_true() {
                continue; // not affine in v
            }
            if !sampler.is_nonvanishing(&coeff, table) {
                continue;
            }
            let const_rank = u8::from(!coordinate_free(&coeff, table));
            let key = (const_rank, kind_rank, coeff.size(), v.index());
            if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
                best = Some((key, v, coeff));
            }
        }
        let (_, v, coeff) = best?;
        let rhs = isolate(c, v, &coeff);
        self.add_rule(v, &rhs, table).ok().map(|()| v)
    }
}

/// Time derivative of `e` along the ansatz field (the coordinate
/// prolongations installed on `table` map each coordinate to its rate
/// slot). Multiplier symbols have no rate: their presence is an error.
///
/// # Errors
///
/// `UnresolvedUnknown` if `e` still contains a multiplier; propagates
/// missing-prolongation errors for unregistered coordinates.
pub fn tangency(e: &Expr, table: &VarTable) -> Result<Expr, EngineError> {
    if let Some(&v) = e
        .variables()
        .iter()
        .find(|&&v| table.kind(v) == VarKind::Multiplier)
    {
        return Err(EngineError::UnresolvedUnknown {
            name: table.name(v).to_string(),
        });
    }
    Ok(total_derivative(e, table)?)
}

// ---------------------------------------------------------------------------
// Linear solving
// ---------------------------------------------------------------------------

/// Outcome of a linear solve: pivoted solutions (back-substituted, so later
/// pivots no longer appear in earlier right-hand sides) and the leftover
/// unknown-free residuals, tagged with the index of the equation they came
/// from.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub solved: Vec<(VarId, Expr)>,
    pub residuals: Vec<(usize, Expr)>,
}

/// Gaussian elimination over the expression field.
///
/// Every equation must be affine in the unknowns (checked by sampling the
/// second derivatives). Pivots require a coefficient that never vanishes on
/// sampled points; preference is parameter-constant coefficient, then
/// smallest coefficient, then equation order, then unknown order. Equations
/// left with no admissible pivot become residuals if every unknown
/// coefficient vanishes identically; a coefficient that vanishes only on
/// part of the domain is a genuine case split and an error.
///
/// # Errors
///
/// * [`EngineError::NonAffine`] — a second derivative in the unknowns does
///   not vanish;
/// * [`EngineError::Inconsistent`] — a residual is a nonzero constant
///   (no coordinates left, yet not identically zero);
/// * [`EngineError::Singular`] — a mixed coefficient blocks pivoting.
pub fn solve_linear(
    equations: &[Expr],
    unknowns: &[VarId],
    table: &VarTable,
    sampler: &mut Sampler,
) -> Result<LinearSolution, EngineError> {
    // Affineness of the joint system.
    for eq in equations {
        for (i, &x) in unknowns.iter().enumerate() {
            if !eq.depends_on(x) {
                continue;
            }
            let dx = diff(eq, x);
            for &y in &unknowns[i..] {
                if !dx.depends_on(y) {
                    continue;
                }
                if !sampler.is_zero(&diff(&dx, y), table).is_true() {
                    return Err(EngineError::NonAffine {
                        unknown: table.name(x).to_string(),
                        equation: print_canonical(eq, table),
                    });
                }
            }
        }
    }

    let mut rows: Vec<(usize, Expr)> = equations.iter().cloned().enumerate().collect();
    let mut remaining: Vec<VarId> = unknowns.to_vec();
    let mut pivots: Vec<(VarId, Expr)> = Vec::new();

    loop {
        // Collect the best admissible pivot over all rows × unknowns.
        let mut best: Option<((u8, usize, usize, usize), usize, VarId, Expr)> = None;
        for (ri, (_, expr)) in rows.iter().enumerate() {
            for (ui, &x) in remaining.iter().enumerate() {
                if !expr.depends_on(x) {
                    continue;
                }
                let coeff = diff(expr, x);
                if sampler.is_zero(&coeff, table).is_true() {
                    continue;
                }
                if !sampler.is_nonvanishing(&coeff, table) {
                    continue; // mixed: handled after the loop if it blocks
                }
                let const_rank = u8::from(!coordinate_free(&coeff, table));
                let key = (const_rank, coeff.size(), ri, ui);
                if best.as_ref().is_none_or(|(k, _, _, _)| key < *k) {
                    best = Some((key, ri, x, coeff));
                }
            }
        }
        let Some((_, ri, x, coeff)) = best else {
            break;
        };
        let (_, expr) = rows.remove(ri);
        let sol = isolate(&expr, x, &coeff);
        remaining.retain(|&u| u != x);
        for (_, row) in &mut rows {
            if row.depends_on(x) {
                *row = row.subst(x, &sol);
            }
        }
        pivots.push((x, sol));
    }

    // Remaining rows: residuals or trouble.
    let mut residuals = Vec::new();
    for (src, expr) in rows {
        let mut clean = expr.clone();
        for &x in unknowns {
            if !clean.depends_on(x) {
                continue;
            }
            let coeff = diff(&clean, x);
            match sampler.is_zero(&coeff, table) {
                Truth::True => clean = clean.subst(x, &Expr::zero()),
                _ => {
                    return Err(EngineError::Singular {
                        unknown: table.name(x).to_string(),
                        equation: print_canonical(&expr, table),
                    })
                }
            }
        }
        if sampler.is_zero(&clean, table).is_true() {
            continue;
        }
        if coordinate_free(&clean, table) {
            return Err(EngineError::Inconsistent {
                residual: print_canonical(&clean, table),
            });
        }
        residuals.push((src, clean));
    }

    // Back-substitute later pivots into earlier solutions.
    for i in (0..pivots.len()).rev() {
        let (var, sol) = pivots[i].clone();
        for (_, earlier) in pivots.iter_mut().take(i) {
            if earlier.depends_on(var) {
                *earlier = earlier.subst(var, &sol);
            }
        }
    }

    Ok(LinearSolution {
        solved: pivots,
        residuals,
    })
}

// ---------------------------------------------------------------------------
// Constraint admission
// ---------------------------------------------------------------------------

enum Admit {
    Added(NamedConstraint),
    Dropped,
    Inconsistent(Expr),
}

/// Least-squares test: is `candidate` (already reduced) numerically a linear
/// combination of the admitted constraints? Evaluations happen at free
/// random assignments; points where any expression fails to evaluate are
/// skipped.
fn in_span(candidate: &Expr, priors: &[Expr], table: &VarTable, sampler: &mut Sampler) -> bool {
    if priors.is_empty() {
        return false;
    }
    let k = priors.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for _ in 0..48 {
        if rows.len() == 16 {
            break;
        }
        let pt = sampler.assignment(table);
        let Ok(b) = eval_at(candidate, &pt) else {
            continue;
        };
        let vals: Result<Vec<f64>, _> = priors.iter().map(|p| eval_at(p, &pt)).collect();
        let Ok(vals) = vals else { continue };
        rows.push(vals);
        rhs.push(b);
    }
    if rows.len() < k.max(4) {
        return false;
    }
    let a = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    let svd = a.clone().svd(true, true);
    let Ok(alpha) = svd.solve(&b, 1e-12) else {
        return false;
    };
    let resid = (&a * &alpha - &b).amax();
    resid <= 1e-7 * (1.0 + b.amax())
}

/// Reduce a raw constraint and decide its fate: trivial (dropped), a
/// nonzero constant (inconsistent), a duplicate (dropped), or genuinely new
/// (admitted, with an elimination attempted).
#[allow(clippy::too_many_arguments)]
fn admit(
    name: String,
    origin: Origin,
    raw: &Expr,
    elim: &mut Elimination,
    priors: &mut Vec<Expr>,
    table: &VarTable,
    sampler: &mut Sampler,
) -> Result<Admit, EngineError> {
    let red = elim.reduce(raw);
    if sampler.is_zero(&red, table).is_true() {
        return Ok(Admit::Dropped);
    }
    if coordinate_free(&red, table) {
        return Ok(Admit::Inconsistent(red));
    }
    if red.var_mask() & unknown_mask(table) != 0 {
        return Err(EngineError::UnresolvedUnknown { name });
    }
    if in_span(&red, priors, table, sampler) {
        return Ok(Admit::Dropped);
    }
    elim.try_eliminate(&red, table, sampler);
    priors.push(red.clone());
    Ok(Admit::Added(NamedConstraint::new(name, red, origin)))
}

// ---------------------------------------------------------------------------
// Generation 0
// ---------------------------------------------------------------------------

pub(crate) struct GenerationZero {
    pub elimination: Elimination,
    pub constraints: Vec<NamedConstraint>,
    pub priors: Vec<Expr>,
    pub solved: Vec<VarId>,
    pub identity: Truth,
    /// Set when the setup already decided the chain's fate (inconsistency).
    pub failure: Option<(ChainStatus, String)>,
}

/// Assemble generation 0: register the direct slot assignments, admit the
/// primaries, solve the momentum-definition and stationarity equations for
/// the multipliers, admit their residuals, and check the energy-tangency
/// identity `Z(H) + Σ λ_α Z(Ψ^α) ≡ 0` (just `Z(H) ≡ 0` for explicit
/// systems) modulo the admitted relations.
pub(crate) fn generation_zero(
    sys: &PontryaginSystem,
    sampler: &mut Sampler,
) -> Result<GenerationZero, EngineError> {
    let table = &sys.table;
    let mut elim = Elimination::new();
    for (symbol, rhs) in &sys.assignments {
        elim.add_rule(*symbol, rhs, table)?;
    }

    let mut constraints = Vec::new();
    let mut priors = Vec::new();
    let mut failure = None;

    for c in &sys.primaries {
        match admit(
            c.name.clone(),
            c.origin,
            &c.expr,
            &mut elim,
            &mut priors,
            table,
            sampler,
        )? {
            Admit::Added(named) => constraints.push(named),
            Admit::Dropped => {}
            Admit::Inconsistent(red) => {
                failure = Some((
                    ChainStatus::Inconsistent,
                    format!(
                        "primary constraint {} reduces to nonvanishing `{}`",
                        c.name,
                        print_canonical(&red, table)
                    ),
                ));
            }
        }
        if failure.is_some() {
            break;
        }
    }

    let mut solved = Vec::new();
    if failure.is_none() {
        let sources: Vec<&NamedConstraint> = sys
            .momentum_defs
            .iter()
            .chain(sys.stationarity.iter())
            .collect();
        let eqs: Vec<Expr> = sources.iter().map(|c| elim.reduce(&c.expr)).collect();
        match solve_linear(&eqs, &sys.multipliers, table, sampler) {
            Ok(solution) => {
                for (var, rhs) in &solution.solved {
                    elim.add_rule(*var, rhs, table)?;
                    solved.push(*var);
                }
                for (src, residual) in &solution.residuals {
                    match admit(
                        sources[*src].name.clone(),
                        sources[*src].origin,
                        residual,
                        &mut elim,
                        &mut priors,
                        table,
                        sampler,
                    )? {
                        Admit::Added(named) => constraints.push(named),
                        Admit::Dropped => {}
                        Admit::Inconsistent(red) => {
                            failure = Some((
                                ChainStatus::Inconsistent,
                                format!(
                                    "constraint {} reduces to nonvanishing `{}`",
                                    sources[*src].name,
                                    print_canonical(&red, table)
                                ),
                            ));
                            break;
                        }
                    }
                }
            }
            Err(EngineError::Inconsistent { residual }) => {
                failure = Some((
                    ChainStatus::Inconsistent,
                    format!("multiplier equations force nonvanishing `{residual}`"),
                ));
            }
            Err(e) => return Err(e),
        }
    }

    let identity = if failure.is_some() {
        Truth::Undecidable
    } else {
        let mut check = total_derivative(&sys.hamiltonian, table)?;
        for (alpha, psi) in sys.problem.constraints.iter().enumerate() {
            check = Expr::add(
                &check,
                &Expr::mul(
                    &Expr::var(sys.multipliers[alpha]),
                    &total_derivative(psi, table)?,
                ),
            );
        }
        sampler.is_zero(&elim.reduce(&check), table)
    };

    Ok(GenerationZero {
        elimination: elim,
        constraints,
        priors,
        solved,
        identity,
        failure,
    })
}

// ---------------------------------------------------------------------------
// The chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Determined,
    Inconsistent,
    Exhausted,
}

impl std::fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ChainStatus::Determined => "determined",
            ChainStatus::Inconsistent => "inconsistent",
            ChainStatus::Exhausted => "exhausted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub index: usize,
    pub constraints: Vec<NamedConstraint>,
}

/// Options for [`run_chain`]. `max_generations: None` caps the tangency
/// rounds at twice the number of non-time coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainOptions {
    pub max_generations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ConstraintChain {
    pub system: PontryaginSystem,
    pub generations: Vec<Generation>,
    pub elimination: Elimination,
    /// Unknowns in the order they were solved (multipliers first, then the
    /// slots as the rounds fix them); values via `elimination.reduce`.
    pub solved: Vec<VarId>,
    pub status: ChainStatus,
    /// Tangency rounds actually executed.
    pub rounds: usize,
    /// Verdict of the energy-tangency identity check.
    pub identity: Truth,
    pub notes: Vec<String>,
}

impl ConstraintChain {
    /// The final value of any symbol modulo the chain's rewrite system.
    pub fn resolve(&self, v: VarId) -> Expr {
        self.elimination.reduce(&Expr::var(v))
    }

    /// Unknowns (slots and multipliers) whose final value still contains
    /// unknown symbols — empty exactly when the chain is determined.
    pub fn unresolved(&self) -> Vec<VarId> {
        let mask = unknown_mask(&self.system.table);
        self.system
            .unknowns()
            .into_iter()
            .filter(|&u| self.resolve(u).var_mask() & mask != 0)
            .collect()
    }
}

/// Run the constraint algorithm to a verdict.
///
/// # Errors
///
/// Structural failures (non-affine equations, blocked pivots, unsolvable
/// multipliers) are hard errors. Inconsistency is *not* an error: it is a
/// legitimate verdict, reported in the chain status.
pub fn run_chain(
    sys: &PontryaginSystem,
    opts: &ChainOptions,
    sampler: &mut Sampler,
) -> Result<ConstraintChain, EngineError> {
    let table = &sys.table;
    let max_rounds = opts.max_generations.unwrap_or(2 * sys.slots.len());
    let gen0 = generation_zero(sys, sampler)?;
    let mut elim = gen0.elimination;
    let mut priors = gen0.priors;
    let mut solved = gen0.solved;
    let mut notes = Vec::new();
    let mut generations = vec![Generation {
        index: 0,
        constraints: gen0.constraints.clone(),
    }];

    if let Some((status, note)) = gen0.failure {
        notes.push(note);
        return Ok(ConstraintChain {
            system: sys.clone(),
            generations,
            elimination: elim,
            solved,
            status,
            rounds: 0,
            identity: gen0.identity,
            notes,
        });
    }
    if !gen0.identity.is_true() {
        notes.push("energy tangency identity did not reduce to zero".to_string());
    }

    let all_unknowns = sys.unknowns();
    let mask = unknown_mask(table);
    let resolved = |elim: &Elimination, u: VarId| elim.reduce(&Expr::var(u)).var_mask() & mask == 0;

    let mut pending = gen0.constraints;
    let mut rounds = 0usize;
    let status = loop {
        if pending.is_empty() {
            if all_unknowns.iter().all(|&u| resolved(&elim, u)) {
                break ChainStatus::Determined;
            }
            let stuck: Vec<&str> = all_unknowns
                .iter()
                .filter(|&&u| !resolved(&elim, u))
                .map(|&u| table.name(u))
                .collect();
            notes.push(format!(
                "no new constraints but unknowns remain: {}",
                stuck.join(", ")
            ));
            break ChainStatus::Exhausted;
        }
        if rounds >= max_rounds {
            notes.push(format!("generation cap {max_rounds} reached"));
            break ChainStatus::Exhausted;
        }
        rounds += 1;

        let unsolved: Vec<VarId> = all_unknowns
            .iter()
            .copied()
            .filter(|&u| !elim.is_mapped(u))
            .collect();
        let mut eqs = Vec::with_capacity(pending.len());
        for c in &pending {
            eqs.push(elim.reduce(&tangency(&c.expr, table)?));
        }
        let solution = match solve_linear(&eqs, &unsolved, table, sampler) {
            Ok(s) => s,
            Err(EngineError::Inconsistent { residual }) => {
                notes.push(format!(
                    "tangency round {rounds} forces nonvanishing `{residual}`"
                ));
                break ChainStatus::Inconsistent;
            }
            Err(e) => return Err(e),
        };
        let progress = !solution.solved.is_empty();
        for (var, rhs) in &solution.solved {
            elim.add_rule(*var, rhs, table)?;
            solved.push(*var);
        }

        let mut new_gen = Vec::new();
        let mut inconsistent_note = None;
        for (j, (_, residual)) in solution.residuals.iter().enumerate() {
            match admit(
                format!("g{rounds}_{}", j + 1),
                Origin::Tangency,
                residual,
                &mut elim,
                &mut priors,
                table,
                sampler,
            )? {
                Admit::Added(named) => new_gen.push(named),
                Admit::Dropped => {}
                Admit::Inconsistent(red) => {
                    inconsistent_note = Some(format!(
                        "tangency round {rounds} forces nonvanishing `{}`",
                        print_canonical(&red, table)
                    ));
                    break;
                }
            }
        }
        generations.push(Generation {
            index: rounds,
            constraints: new_gen.clone(),
        });
        if let Some(note) = inconsistent_note {
            notes.push(note);
            break ChainStatus::Inconsistent;
        }
        if new_gen.is_empty() && !progress && !all_unknowns.iter().all(|&u| resolved(&elim, u)) {
            notes.push("tangency round made no progress".to_string());
            break ChainStatus::Exhausted;
        }
        pending = new_gen;
    };

    Ok(ConstraintChain {
        system: sys.clone(),
        generations,
        elimination: elim,
        solved,
        status,
        rounds,
        identity: gen0.identity,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Determined field
// ---------------------------------------------------------------------------

/// A fully determined evolution field on the final constraint submanifold:
/// a rate for every coordinate, the constraints cutting the manifold, and a
/// choice of dependent coordinate per constraint for projections.
#[derive(Debug, Clone)]
pub struct DeterminedField {
    pub system: PontryaginSystem,
    /// `(coordinate, rate)` for every non-time coordinate, in slot order.
    pub rates: Vec<(VarId, Expr)>,
    /// All admitted constraints, every generation, in admission order.
    pub constraints: Vec<NamedConstraint>,
    /// Dependent coordinate per constraint (parallel to `constraints`).
    pub dependents: Vec<VarId>,
    pub elimination: Elimination,
    /// Stationarity conditions reduced to coordinate form, for diagnostics.
    pub stationarity: Vec<Expr>,
}

impl DeterminedField {
    /// Non-state coordinates not claimed as dependents: the degrees of
    /// freedom a boundary-value solver may adjust at `t0`.
    pub fn free_coordinates(&self) -> Vec<VarId> {
        self.system
            .slots
            .iter()
            .map(|s| s.coord)
            .filter(|&c| {
                self.system.table.kind(c) != VarKind::State && !self.dependents.contains(&c)
            })
            .collect()
    }
}

/// Maximum-cardinality matching (Kuhn's algorithm) of constraints to
/// distinct non-state coordinates they depend on, honoring
/// [`dependent_rank`] preferences.
fn match_dependents(
    constraints: &[NamedConstraint],
    table: &VarTable,
) -> Result<Vec<VarId>, EngineError> {
    let candidates: Vec<Vec<VarId>> = constraints
        .iter()
        .map(|c| {
            let mut vars: Vec<VarId> = c
                .expr
                .variables()
                .into_iter()
                .filter(|&v| dependent_rank(table.kind(v)).is_some())
                .collect();
            vars.sort_by_key(|&v| (dependent_rank(table.kind(v)).unwrap(), v.index()));
            vars
        })
        .collect();

    fn assign(
        ci: usize,
        candidates: &[Vec<VarId>],
        owner: &mut std::collections::HashMap<VarId, usize>,
        visited: &mut Vec<bool>,
    ) -> bool {
        for &v in &candidates[ci] {
            match owner.get(&v).copied() {
                None => {
                    owner.insert(v, ci);
                    return true;
                }
                Some(prev) => {
                    if !visited[prev] {
                        visited[prev] = true;
                        if assign(prev, candidates, owner, visited) {
                            owner.insert(v, ci);
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    let mut owner = std::collections::HashMap::new();
    for ci in 0..constraints.len() {
        let mut visited = vec![false; constraints.len()];
        visited[ci] = true;
        if !assign(ci, &candidates, &mut owner, &mut visited) {
            return Err(EngineError::Projection {
                name: constraints[ci].name.clone(),
            });
        }
    }
    let mut out = vec![VarId(0); constraints.len()];
    for (v, ci) in owner {
        out[ci] = v;
    }
    Ok(out)
}

/// Extract the determined field from a finished chain.
///
/// # Errors
///
/// `NotDetermined` unless the chain status is determined; `Tangency` if any
/// final constraint fails its tangency certificate; `Projection` if the
/// constraints cannot be matched to distinct dependent coordinates.
pub fn determined_field(
    chain: &ConstraintChain,
    sampler: &mut Sampler,
) -> Result<DeterminedField, EngineError> {
    if chain.status != ChainStatus::Determined {
        return Err(EngineError::NotDetermined {
            status: chain.status.to_string(),
        });
    }
    let sys = &chain.system;
    let table = &sys.table;
    let mask = unknown_mask(table);

    let mut rates = Vec::with_capacity(sys.slots.len());
    for slot in &sys.slots {
        let rate = chain.resolve(slot.symbol);
        if rate.var_mask() & mask != 0 {
            return Err(EngineError::NotDetermined {
                status: format!("rate of {} is unresolved", table.name(slot.coord)),
            });
        }
        rates.push((slot.coord, rate));
    }

    let constraints: Vec<NamedConstraint> = chain
        .generations
        .iter()
        .flat_map(|g| g.constraints.iter().cloned())
        .collect();

    // Tangency certificate against the final rewrite system.
    for c in &constraints {
        let z = tangency(&c.expr, table)?;
        if matches!(
            sampler.is_zero(&chain.elimination.reduce(&z), table),
            Truth::False
        ) {
            return Err(EngineError::Tangency {
                name: c.name.clone(),
            });
        }
    }

    let dependents = match_dependents(&constraints, table)?;
    let stationarity = sys
        .stationarity
        .iter()
        .map(|c| chain.elimination.reduce(&c.expr))
        .collect();

    Ok(DeterminedField {
        system: sys.clone(),
        rates,
        constraints,
        dependents,
        elimination: chain.elimination.clone(),
        stationarity,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

fn identity_label(t: Truth) -> &'static str {
    match t {
        Truth::True => "ok",
        Truth::False => "failed",
        Truth::Undecidable => "undecidable",
    }
}

/// Human-readable chain report (the `chain.txt` payload).
pub fn chain_report(chain: &ConstraintChain) -> String {
    use std::fmt::Write as _;
    let table = &chain.system.table;
    let mut out = String::new();
    let _ = writeln!(out, "status: {}", chain.status);
    let _ = writeln!(out, "rounds: {}", chain.rounds);
    let _ = writeln!(out, "identity: {}", identity_label(chain.identity));
    for note in &chain.notes {
        let _ = writeln!(out, "note: {note}");
    }
    for gen in &chain.generations {
        let _ = writeln!(out, "\nGENERATION {}:", gen.index);
        if gen.constraints.is_empty() {
            let _ = writeln!(out, "  (no new constraints)");
        }
        for c in &gen.constraints {
            let _ = writeln!(
                out,
                "  {} [{}]: {}",
                c.name,
                c.origin,
                print_canonical(&c.expr, table)
            );
        }
    }
    let _ = writeln!(out, "\nSOLVED:");
    let mask = unknown_mask(table);
    for slot in &chain.system.slots {
        let value = chain.resolve(slot.symbol);
        if value.var_mask() & mask != 0 {
            let _ = writeln!(out, "  {} := (unsolved)", table.name(slot.symbol));
        } else {
            let _ = writeln!(
                out,
                "  {} := {}",
                table.name(slot.symbol),
                print_canonical(&value, table)
            );
        }
    }
    for &lam in &chain.system.multipliers {
        let value = chain.resolve(lam);
        if value.var_mask() & mask != 0 {
            let _ = writeln!(out, "  {} := (unsolved)", table.name(lam));
        } else {
            let _ = writeln!(
                out,
                "  {} := {}",
                table.name(lam),
                print_canonical(&value, table)
            );
        }
    }
    let _ = writeln!(out, "\nELIMINATIONS:");
    for (var, _) in chain.elimination.rules() {
        if !matches!(
            table.kind(*var),
            VarKind::Auxiliary | VarKind::Multiplier
        ) {
            let _ = writeln!(
                out,
                "  {} := {}",
                table.name(*var),
                print_canonical(&chain.resolve(*var), table)
            );
        }
    }
    out
}

/// Machine-readable chain report (the `chain.json` payload).
pub fn chain_json(chain: &ConstraintChain) -> serde_json::Value {
    let table = &chain.system.table;
    let mask = unknown_mask(table);
    let generations: Vec<serde_json::Value> = chain
        .generations
        .iter()
        .map(|g| {
            serde_json::json!({
                "index": g.index,
                "constraints": g.constraints.iter().map(|c| serde_json::json!({
                    "name": c.name,
                    "origin": c.origin.to_string(),
                    "expr": print_canonical(&c.expr, table),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let solved: Vec<serde_json::Value> = chain
        .system
        .slots
        .iter()
        .map(|s| s.symbol)
        .chain(chain.system.multipliers.iter().copied())
        .map(|sym| {
            let value = chain.resolve(sym);
            serde_json::json!({
                "symbol": table.name(sym),
                "expr": if value.var_mask() & mask != 0 {
                    serde_json::Value::Null
                } else {
                    serde_json::Value::String(print_canonical(&value, table))
                },
            })
        })
        .collect();
    let eliminations: Vec<serde_json::Value> = chain
        .elimination
        .rules()
        .iter()
        .filter(|(var, _)| {
            !matches!(table.kind(*var), VarKind::Auxiliary | VarKind::Multiplier)
        })
        .map(|(var, _)| {
            serde_json::json!({
                "var": table.name(*var),
                "expr": print_canonical(&chain.resolve(*var), table),
            })
        })
        .collect();
    serde_json::json!({
        "status": chain.status.to_string(),
        "rounds": chain.rounds,
        "identity": identity_label(chain.identity),
        "generations": generations,
        "solved": solved,
        "eliminations": eliminations,
        "notes": chain.notes,
    })
}
