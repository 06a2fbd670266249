//! Immutable expression trees with shallow structural simplification.
//!
//! [`Expr`] is a reference-counted tree over constants, variables, the binary
//! operators `+ − × ÷ ^`, unary negation, and a fixed set of elementary
//! functions. Every node caches a structural hash (stable across runs — used
//! for canonical report ordering) and a bitmask of the variables appearing
//! beneath it (used to short-circuit differentiation and dependency queries).
//!
//! Construction goes through smart constructors that apply *shallow* rewrites
//! only: constant folding and the identities `0·x`, `1·x`, `x+0`, `x−0`,
//! `x−x`, `x/1`, `0/x`, `x^0`, `x^1`, `−(−x)`. Nothing deeper (no
//! distribution, no factoring, no division evaluation) — symbolic soundness
//! is established by randomized numeric testing, not by normal forms.

use std::fmt;
use std::sync::Arc;

use crate::symexpr::table::VarId;

/// The elementary functions the engine knows how to parse, print,
/// differentiate, and evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryFn {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tan => "tan",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryFn> {
        match name {
            "sin" => Some(UnaryFn::Sin),
            "cos" => Some(UnaryFn::Cos),
            "tan" => Some(UnaryFn::Tan),
            "exp" => Some(UnaryFn::Exp),
            "log" => Some(UnaryFn::Log),
            "sqrt" => Some(UnaryFn::Sqrt),
            _ => None,
        }
    }
}

/// Node payload. Public for pattern matching; construct via the smart
/// constructors on [`Expr`] so the shallow rewrites stay applied.
#[derive(Debug, Clone)]
pub enum ExprNode {
    Const(f64),
    Var(VarId),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Neg(Expr),
    Func(UnaryFn, Expr),
}

struct ExprRepr {
    node: ExprNode,
    /// FNV-1a structural hash; stable across processes.
    hash: u64,
    /// Bitmask over `VarId` indices (< 128) of variables under this node.
    mask: u128,
    /// Total node count of the subtree (used as a size tiebreaker).
    size: u32,
}

/// An immutable, cheaply clonable symbolic expression.
#[derive(Clone)]
pub struct Expr(Arc<ExprRepr>);

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv_step(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl Expr {
    fn build(node: ExprNode) -> Expr {
        let (tag, children): (u8, Vec<&Expr>) = match &node {
            ExprNode::Const(_) => (0, vec![]),
            ExprNode::Var(_) => (1, vec![]),
            ExprNode::Add(a, b) => (2, vec![a, b]),
            ExprNode::Sub(a, b) => (3, vec![a, b]),
            ExprNode::Mul(a, b) => (4, vec![a, b]),
            ExprNode::Div(a, b) => (5, vec![a, b]),
            ExprNode::Pow(a, b) => (6, vec![a, b]),
            ExprNode::Neg(a) => (7, vec![a]),
            ExprNode::Func(_, a) => (8, vec![a]),
        };
        let mut hash = fnv_step(FNV_OFFSET, &[tag]);
        match &node {
            ExprNode::Const(c) => hash = fnv_step(hash, &c.to_bits().to_le_bytes()),
            ExprNode::Var(v) => hash = fnv_step(hash, &v.0.to_le_bytes()),
            ExprNode::Func(f, _) => hash = fnv_step(hash, &[*f as u8]),
            _ => {}
        }
        let mut mask: u128 = 0;
        let mut size: u32 = 1;
        if let ExprNode::Var(v) = &node {
            mask |= 1u128 << v.index();
        }
        for child in children {
            hash = fnv_step(hash, &child.0.hash.to_le_bytes());
            mask |= child.0.mask;
            size = size.saturating_add(child.0.size);
        }
        Expr(Arc::new(ExprRepr {
            node,
            hash,
            mask,
            size,
        }))
    }

    /// A floating constant. `-0.0` is normalized to `0.0` so structural
    /// equality matches numeric equality on the constants the engine folds.
    pub fn constant(c: f64) -> Expr {
        let c = if c == 0.0 { 0.0 } else { c };
        Expr::build(ExprNode::Const(c))
    }

    pub fn var(id: VarId) -> Expr {
        Expr::build(ExprNode::Var(id))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn node(&self) -> &ExprNode {
        &self.0.node
    }

    /// Structural hash; equal expressions hash equal, and the hash is stable
    /// across runs (FNV-1a over the tree).
    pub fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    /// Node count of the tree.
    pub fn size(&self) -> usize {
        self.0.size as usize
    }

    /// Does the expression reference `id` anywhere?
    pub fn depends_on(&self, id: VarId) -> bool {
        self.0.mask & (1u128 << id.index()) != 0
    }

    /// Bitmask of referenced variables, indexed by `VarId::index`.
    pub fn var_mask(&self) -> u128 {
        self.0.mask
    }

    /// All referenced variable ids, ascending.
    pub fn variables(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        let mut mask = self.0.mask;
        while mask != 0 {
            let idx = mask.trailing_zeros();
            out.push(VarId(idx));
            mask &= mask - 1;
        }
        out
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            ExprNode::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(self.node(), ExprNode::Const(c) if *c == 0.0)
    }

    pub fn is_one_const(&self) -> bool {
        matches!(self.node(), ExprNode::Const(c) if *c == 1.0)
    }

    // ---- smart constructors -------------------------------------------------

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero_const() {
            return b.clone();
        }
        if b.is_zero_const() {
            return a.clone();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(x + y);
        }
        Expr::build(ExprNode::Add(a.clone(), b.clone()))
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        if b.is_zero_const() {
            return a.clone();
        }
        if a.is_zero_const() {
            return Expr::neg(b);
        }
        if a == b {
            return Expr::zero();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(x - y);
        }
        Expr::build(ExprNode::Sub(a.clone(), b.clone()))
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero_const() || b.is_zero_const() {
            return Expr::zero();
        }
        if a.is_one_const() {
            return b.clone();
        }
        if b.is_one_const() {
            return a.clone();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(x * y);
        }
        // Float constant factors to the front: write each operand as
        // coefficient × term, multiply the coefficients, and rebuild. Trees
        // made by these constructors carry at most one leading constant per
        // product, so a shallow split suffices and products never bury
        // constants (`0.5*(a*(2*x))` becomes `a*x`).
        let (ca, ta) = Expr::split_coeff(a);
        let (cb, tb) = Expr::split_coeff(b);
        let c = ca * cb;
        let term = match (ta, tb) {
            (Some(x), Some(y)) => Expr::build(ExprNode::Mul(x, y)),
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => return Expr::constant(c),
        };
        if c == 0.0 {
            Expr::zero()
        } else if c == 1.0 {
            term
        } else if c == -1.0 {
            Expr::build(ExprNode::Neg(term))
        } else {
            Expr::build(ExprNode::Mul(Expr::constant(c), term))
        }
    }

    /// Split `e` as `coefficient × term`: a leading constant (possibly via
    /// negation) and the non-constant rest (`None` for pure constants).
    fn split_coeff(e: &Expr) -> (f64, Option<Expr>) {
        match e.node() {
            ExprNode::Const(c) => (*c, None),
            ExprNode::Neg(inner) => {
                let (c, t) = Expr::split_coeff(inner);
                (-c, t)
            }
            ExprNode::Mul(u, v) => {
                if let Some(c) = u.as_const() {
                    (c, Some(v.clone()))
                } else if let Some(c) = v.as_const() {
                    (c, Some(u.clone()))
                } else {
                    (1.0, Some(e.clone()))
                }
            }
            _ => (1.0, Some(e.clone())),
        }
    }

    /// Division is kept unevaluated except for the identities `x/1 = x`,
    /// `0/x = 0` and folding of two nonzero constants.
    pub fn div(a: &Expr, b: &Expr) -> Expr {
        if b.is_one_const() {
            return a.clone();
        }
        if a.is_zero_const() {
            return Expr::zero();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != 0.0 {
                return Expr::constant(x / y);
            }
        }
        // Float negations out of quotients so paired signs cancel.
        if let ExprNode::Neg(x) = a.node() {
            return Expr::neg(&Expr::div(x, b));
        }
        if let ExprNode::Neg(y) = b.node() {
            return Expr::neg(&Expr::div(a, y));
        }
        Expr::build(ExprNode::Div(a.clone(), b.clone()))
    }

    pub fn pow(a: &Expr, b: &Expr) -> Expr {
        if b.is_zero_const() {
            return Expr::one();
        }
        if b.is_one_const() {
            return a.clone();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            let v = x.powf(y);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr::build(ExprNode::Pow(a.clone(), b.clone()))
    }

    pub fn neg(a: &Expr) -> Expr {
        if let Some(x) = a.as_const() {
            return Expr::constant(-x);
        }
        if let ExprNode::Neg(inner) = a.node() {
            return inner.clone();
        }
        Expr::build(ExprNode::Neg(a.clone()))
    }

    pub fn func(f: UnaryFn, a: &Expr) -> Expr {
        if let Some(x) = a.as_const() {
            let v = match f {
                UnaryFn::Sin => x.sin(),
                UnaryFn::Cos => x.cos(),
                UnaryFn::Tan => x.tan(),
                UnaryFn::Exp => x.exp(),
                UnaryFn::Log => x.ln(),
                UnaryFn::Sqrt => x.sqrt(),
            };
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr::build(ExprNode::Func(f, a.clone()))
    }

    /// Sum a sequence of terms (empty sum is 0).
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .fold(Expr::zero(), |acc, t| Expr::add(&acc, &t))
    }

    /// Rebuild the tree bottom-up through the smart constructors.
    ///
    /// Useful after substitution-heavy passes: re-applies the shallow
    /// identities everywhere without changing the value anywhere.
    pub fn simplify(&self) -> Expr {
        match self.node() {
            ExprNode::Const(_) | ExprNode::Var(_) => self.clone(),
            ExprNode::Add(a, b) => Expr::add(&a.simplify(), &b.simplify()),
            ExprNode::Sub(a, b) => Expr::sub(&a.simplify(), &b.simplify()),
            ExprNode::Mul(a, b) => Expr::mul(&a.simplify(), &b.simplify()),
            ExprNode::Div(a, b) => Expr::div(&a.simplify(), &b.simplify()),
            ExprNode::Pow(a, b) => Expr::pow(&a.simplify(), &b.simplify()),
            ExprNode::Neg(a) => Expr::neg(&a.simplify()),
            ExprNode::Func(f, a) => Expr::func(*f, &a.simplify()),
        }
    }

    /// Replace every occurrence of `id` by `replacement` (one variable).
    pub fn subst(&self, id: VarId, replacement: &Expr) -> Expr {
        self.subst_map(&[(id, replacement.clone())])
    }

    /// Replace several variables simultaneously.
    ///
    /// Simultaneous means occurrences introduced *by* a replacement are not
    /// themselves rewritten in the same pass.
    pub fn subst_map(&self, pairs: &[(VarId, Expr)]) -> Expr {
        let mut mask: u128 = 0;
        for (id, _) in pairs {
            mask |= 1u128 << id.index();
        }
        if self.0.mask & mask == 0 {
            return self.clone();
        }
        self.subst_rec(pairs, mask)
    }

    fn subst_rec(&self, pairs: &[(VarId, Expr)], mask: u128) -> Expr {
        if self.0.mask & mask == 0 {
            return self.clone();
        }
        match self.node() {
            ExprNode::Const(_) => self.clone(),
            ExprNode::Var(v) => {
                for (id, rep) in pairs {
                    if id == v {
                        return rep.clone();
                    }
                }
                self.clone()
            }
            ExprNode::Add(a, b) => {
                Expr::add(&a.subst_rec(pairs, mask), &b.subst_rec(pairs, mask))
            }
            ExprNode::Sub(a, b) => {
                Expr::sub(&a.subst_rec(pairs, mask), &b.subst_rec(pairs, mask))
            }
            ExprNode::Mul(a, b) => {
                Expr::mul(&a.subst_rec(pairs, mask), &b.subst_rec(pairs, mask))
            }
            ExprNode::Div(a, b) => {
                Expr::div(&a.subst_rec(pairs, mask), &b.subst_rec(pairs, mask))
            }
            ExprNode::Pow(a, b) => {
                Expr::pow(&a.subst_rec(pairs, mask), &b.subst_rec(pairs, mask))
            }
            ExprNode::Neg(a) => Expr::neg(&a.subst_rec(pairs, mask)),
            ExprNode::Func(f, a) => Expr::func(*f, &a.subst_rec(pairs, mask)),
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash || self.0.size != other.0.size {
            return false;
        }
        match (&self.0.node, &other.0.node) {
            (ExprNode::Const(a), ExprNode::Const(b)) => a.to_bits() == b.to_bits(),
            (ExprNode::Var(a), ExprNode::Var(b)) => a == b,
            (ExprNode::Add(a1, b1), ExprNode::Add(a2, b2))
            | (ExprNode::Sub(a1, b1), ExprNode::Sub(a2, b2))
            | (ExprNode::Mul(a1, b1), ExprNode::Mul(a2, b2))
            | (ExprNode::Div(a1, b1), ExprNode::Div(a2, b2))
            | (ExprNode::Pow(a1, b1), ExprNode::Pow(a2, b2)) => a1 == a2 && b1 == b2,
            (ExprNode::Neg(a1), ExprNode::Neg(a2)) => a1 == a2,
            (ExprNode::Func(f1, a1), ExprNode::Func(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl std::hash::Hash for Expr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // The printer lives in print.rs; Debug shows raw structure.
        match self.node() {
            ExprNode::Const(c) => write!(f, "{c}"),
            ExprNode::Var(v) => write!(f, "#{}", v.index()),
            ExprNode::Add(a, b) => write!(f, "({a:?} + {b:?})"),
            ExprNode::Sub(a, b) => write!(f, "({a:?} - {b:?})"),
            ExprNode::Mul(a, b) => write!(f, "({a:?} * {b:?})"),
            ExprNode::Div(a, b) => write!(f, "({a:?} / {b:?})"),
            ExprNode::Pow(a, b) => write!(f, "({a:?} ^ {b:?})"),
            ExprNode::Neg(a) => write!(f, "(-{a:?})"),
            ExprNode::Func(fun, a) => write!(f, "{}({a:?})", fun.name()),
        }
    }
}
