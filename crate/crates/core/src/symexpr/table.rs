//! Variable tables: the naming context every expression is built against.
//!
//! A [`VarTable`] owns the set of symbols an expression may reference. Each
//! variable carries a [`VarKind`] (time, state, velocity, …) that downstream
//! passes use to decide how a symbol is sampled, eliminated, or integrated.
//! Tables also record the prolongation map (the rate expression playing the
//! role of each variable's time derivative) and per-parameter sampling
//! metadata.

use std::collections::HashMap;

use crate::symexpr::expr::Expr;
use crate::symexpr::SymError;

/// Index of a variable inside its [`VarTable`].
///
/// Deliberately a thin newtype: expressions store `VarId`s, never names, so
/// renaming or cross-table transport must go through the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) u32);

impl VarId {
    /// Position of this variable in the table's declaration order.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Role a variable plays in a problem or derived system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// The independent time variable `t`.
    Time,
    /// A configuration/state coordinate.
    State,
    /// A velocity coordinate (formal derivative of a state).
    Velocity,
    /// A control input.
    Control,
    /// A momentum conjugate to a state.
    Momentum,
    /// The momentum conjugate to time (the energy slot `p`).
    MomentumP,
    /// A constraint multiplier.
    Multiplier,
    /// A named constant with sampling metadata.
    Parameter,
    /// An internal unknown (ansatz coefficient slot symbol).
    Auxiliary,
}

impl VarKind {
    /// True for the kinds that form the geometric phase space (everything a
    /// trajectory assigns a value to): time, states, velocities, controls,
    /// momenta and the energy slot.
    pub fn is_coordinate(self) -> bool {
        !matches!(
            self,
            VarKind::Multiplier | VarKind::Parameter | VarKind::Auxiliary
        )
    }
}

/// Sampling metadata for a parameter variable.
///
/// `value` is the concrete number used by integration (and by sampling when no
/// range is declared). `range` drives randomized symbolic checks. `nonzero`
/// rejects samples too close to zero so declared-nonvanishing parameters can
/// safely appear in pivots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub value: Option<f64>,
    pub range: Option<(f64, f64)>,
    pub nonzero: bool,
}

impl Default for ParamSpec {
    fn default() -> Self {
        ParamSpec {
            value: None,
            range: None,
            nonzero: false,
        }
    }
}

/// A single registered variable.
#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
}

/// Expression identifiers must look like `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Names reserved for the function call syntax of the expression grammar.
pub const FUNCTION_NAMES: [&str; 6] = ["sin", "cos", "tan", "exp", "log", "sqrt"];

/// The naming context for a family of expressions.
///
/// Tables are append-only; a `VarId` stays valid for the table's lifetime.
/// At most [`VarTable::MAX_VARS`] variables fit in one table (expressions keep
/// a bitmask of referenced variables for fast dependency queries).
#[derive(Debug, Clone, Default)]
pub struct VarTable {
    vars: Vec<Var>,
    by_name: HashMap<String, VarId>,
    prolong: HashMap<VarId, Expr>,
    params: HashMap<VarId, ParamSpec>,
}

impl VarTable {
    /// Hard cap on variables per table, set by the width of the dependency
    /// bitmask cached in every expression node.
    pub const MAX_VARS: usize = 128;

    pub fn new() -> Self {
        Self::default()
    }

    /// Register a new variable. Errors on duplicate names, invalid
    /// identifiers, collisions with function names, and table overflow.
    pub fn register(&mut self, name: &str, kind: VarKind) -> Result<VarId, SymError> {
        if !is_valid_identifier(name) {
            return Err(SymError::InvalidName {
                name: name.to_string(),
            });
        }
        if FUNCTION_NAMES.contains(&name) {
            return Err(SymError::ReservedName {
                name: name.to_string(),
            });
        }
        if self.by_name.contains_key(name) {
            return Err(SymError::DuplicateName {
                name: name.to_string(),
            });
        }
        if self.vars.len() >= Self::MAX_VARS {
            return Err(SymError::TableFull);
        }
        let id = VarId(self.vars.len() as u32);
        self.vars.push(Var {
            name: name.to_string(),
            kind,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Register a parameter with its sampling metadata.
    pub fn register_param(&mut self, name: &str, spec: ParamSpec) -> Result<VarId, SymError> {
        let id = self.register(name, VarKind::Parameter)?;
        self.params.insert(id, spec);
        Ok(id)
    }

    /// Declare `rate` as the formal time derivative of `base`.
    pub fn set_prolongation(&mut self, base: VarId, rate: Expr) {
        self.prolong.insert(base, rate);
    }

    /// Remove the declared rate of `base`, if any.
    pub fn clear_prolongation(&mut self, base: VarId) {
        self.prolong.remove(&base);
    }

    /// The formal time derivative of `base`, if declared.
    pub fn prolongation(&self, base: VarId) -> Option<&Expr> {
        self.prolong.get(&base)
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.vars[id.index()].name
    }

    pub fn kind(&self, id: VarId) -> VarKind {
        self.vars[id.index()].kind
    }

    pub fn param_spec(&self, id: VarId) -> Option<&ParamSpec> {
        self.params.get(&id)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// All variable ids in declaration order.
    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len()).map(|i| VarId(i as u32))
    }

    /// All ids of a given kind, in declaration order.
    pub fn ids_of_kind(&self, kind: VarKind) -> Vec<VarId> {
        self.ids().filter(|&id| self.kind(id) == kind).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_lookup() {
        let mut table = VarTable::new();
        let t = table.register("t", VarKind::Time).unwrap();
        let q = table.register("q1", VarKind::State).unwrap();
        assert_eq!(table.lookup("t"), Some(t));
        assert_eq!(table.lookup("q1"), Some(q));
        assert_eq!(table.name(q), "q1");
        assert_eq!(table.kind(q), VarKind::State);
        assert_eq!(table.lookup("nope"), None);
    }

    #[test]
    fn rejects_bad_names() {
        let mut table = VarTable::new();
        assert!(matches!(
            table.register("1abc", VarKind::State),
            Err(SymError::InvalidName { .. })
        ));
        assert!(matches!(
            table.register("sin", VarKind::State),
            Err(SymError::ReservedName { .. })
        ));
        table.register("x", VarKind::State).unwrap();
        assert!(matches!(
            table.register("x", VarKind::Control),
            Err(SymError::DuplicateName { .. })
        ));
    }

    #[test]
    fn prolongation_roundtrip() {
        let mut table = VarTable::new();
        let q = table.register("q1", VarKind::State).unwrap();
        let v = table.register("v_q1", VarKind::Velocity).unwrap();
        table.set_prolongation(q, Expr::var(v));
        assert_eq!(table.prolongation(q), Some(&Expr::var(v)));
        assert_eq!(table.prolongation(v), None);
    }
}
