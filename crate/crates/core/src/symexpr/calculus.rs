//! Symbolic differentiation.
//!
//! [`diff`] is the ordinary partial derivative with respect to one table
//! variable. [`total_derivative`] lifts it along a vector field declared by
//! the table's prolongation map: time differentiates with unit rate, each
//! prolonged coordinate contributes its registered rate, and parameters are
//! treated as constants.

use crate::symexpr::expr::{Expr, ExprNode, UnaryFn};
use crate::symexpr::table::{VarId, VarKind, VarTable};
use crate::symexpr::SymError;

/// Partial derivative `∂e/∂id`. Subtrees not mentioning `id` short-circuit
/// to zero via the cached variable mask.
pub fn diff(e: &Expr, id: VarId) -> Expr {
    if !e.depends_on(id) {
        return Expr::zero();
    }
    match e.node() {
        ExprNode::Const(_) => Expr::zero(),
        ExprNode::Var(v) => {
            if *v == id {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        ExprNode::Add(a, b) => Expr::add(&diff(a, id), &diff(b, id)),
        ExprNode::Sub(a, b) => Expr::sub(&diff(a, id), &diff(b, id)),
        ExprNode::Mul(a, b) => {
            let da = diff(a, id);
            let db = diff(b, id);
            Expr::add(&Expr::mul(&da, b), &Expr::mul(a, &db))
        }
        ExprNode::Div(a, b) => {
            let da = diff(a, id);
            if !b.depends_on(id) {
                return Expr::div(&da, b);
            }
            let db = diff(b, id);
            let num = Expr::sub(&Expr::mul(&da, b), &Expr::mul(a, &db));
            let den = Expr::pow(b, &Expr::constant(2.0));
            Expr::div(&num, &den)
        }
        ExprNode::Pow(a, b) => {
            if !b.depends_on(id) {
                // d(a^b) = b * a^(b-1) * da
                let bm1 = Expr::sub(b, &Expr::one());
                let outer = Expr::mul(b, &Expr::pow(a, &bm1));
                return Expr::mul(&outer, &diff(a, id));
            }
            // General case: a^b * (db*log(a) + b*da/a).
            let da = diff(a, id);
            let db = diff(b, id);
            let term1 = Expr::mul(&db, &Expr::func(UnaryFn::Log, a));
            let term2 = Expr::mul(b, &Expr::div(&da, a));
            Expr::mul(e, &Expr::add(&term1, &term2))
        }
        ExprNode::Neg(a) => Expr::neg(&diff(a, id)),
        ExprNode::Func(f, a) => {
            let da = diff(a, id);
            let outer = match f {
                UnaryFn::Sin => Expr::func(UnaryFn::Cos, a),
                UnaryFn::Cos => Expr::neg(&Expr::func(UnaryFn::Sin, a)),
                UnaryFn::Tan => {
                    let tan = Expr::func(UnaryFn::Tan, a);
                    Expr::add(&Expr::one(), &Expr::mul(&tan, &tan))
                }
                UnaryFn::Exp => Expr::func(UnaryFn::Exp, a),
                UnaryFn::Log => return Expr::div(&da, a),
                UnaryFn::Sqrt => {
                    let two_sqrt = Expr::mul(&Expr::constant(2.0), e);
                    return Expr::div(&da, &two_sqrt);
                }
            };
            Expr::mul(&outer, &da)
        }
    }
}

/// Total derivative of `e` along the table's prolongation map:
/// `∂e/∂t + Σ rate(x) · ∂e/∂x` over the non-parameter variables appearing
/// in `e`.
///
/// # Errors
///
/// [`SymError::MissingProlongation`] when `e` mentions a coordinate without a
/// registered rate.
pub fn total_derivative(e: &Expr, table: &VarTable) -> Result<Expr, SymError> {
    let mut acc = Expr::zero();
    for id in e.variables() {
        match table.kind(id) {
            VarKind::Time => acc = Expr::add(&acc, &diff(e, id)),
            VarKind::Parameter => continue,
            _ => {
                let rate = table.prolongation(id).ok_or_else(|| {
                    SymError::MissingProlongation {
                        name: table.name(id).to_string(),
                    }
                })?;
                acc = Expr::add(&acc, &Expr::mul(rate, &diff(e, id)));
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::numeric::{Sampler, Truth, DEFAULT_SEED};
    use crate::symexpr::parse::parse;
    use crate::symexpr::table::VarTable;

    fn table() -> VarTable {
        let mut t = VarTable::new();
        t.register("t", VarKind::Time).unwrap();
        t.register("x", VarKind::State).unwrap();
        t.register("v", VarKind::Velocity).unwrap();
        t.register_param("k", Default::default()).unwrap();
        t
    }

    fn assert_same(e1: &Expr, e2: &Expr, t: &VarTable) {
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        let d = Expr::sub(e1, e2);
        assert_eq!(s.is_zero(&d, t), Truth::True, "{e1:?} != {e2:?}");
    }

    #[test]
    fn polynomial_rules() {
        let t = table();
        let x = t.lookup("x").unwrap();
        let e = parse("k*x^3 - 2*x + 7", &t).unwrap();
        let expect = parse("3*k*x^2 - 2", &t).unwrap();
        assert_same(&diff(&e, x), &expect, &t);
    }

    #[test]
    fn chain_quotient_and_functions() {
        let t = table();
        let x = t.lookup("x").unwrap();
        let e = parse("sin(x^2)/x", &t).unwrap();
        let expect = parse("(2*x^2*cos(x^2) - sin(x^2))/x^2", &t).unwrap();
        assert_same(&diff(&e, x), &expect, &t);

        let e = parse("exp(k*x) + log(1 + x^2) + sqrt(1 + x^2)", &t).unwrap();
        let expect = parse(
            "k*exp(k*x) + 2*x/(1 + x^2) + x/sqrt(1 + x^2)",
            &t,
        )
        .unwrap();
        assert_same(&diff(&e, x), &expect, &t);
    }

    #[test]
    fn variable_exponent() {
        let t = table();
        let x = t.lookup("x").unwrap();
        // d/dx (1+x^2)^v = (1+x^2)^v * v * 2x / (1+x^2); base positive so the
        // log form is defined on the whole sample domain.
        let e = parse("(1 + x^2)^v", &t).unwrap();
        let expect = parse("(1 + x^2)^v * v*2*x/(1 + x^2)", &t).unwrap();
        assert_same(&diff(&e, x), &expect, &t);
    }

    #[test]
    fn total_derivative_uses_prolongations() {
        let mut t = table();
        let x = t.lookup("x").unwrap();
        let v = t.lookup("v").unwrap();
        // x' = v, v' = -k*x  (harmonic oscillator): energy is conserved.
        t.set_prolongation(x, parse("v", &t).unwrap());
        t.set_prolongation(v, parse("-k*x", &t).unwrap());
        let energy = parse("0.5*v^2 + 0.5*k*x^2", &t).unwrap();
        let dot = total_derivative(&energy, &t).unwrap();
        let mut s = Sampler::with_seed(DEFAULT_SEED);
        assert_eq!(s.is_zero(&dot, &t), Truth::True);

        // Explicit time dependence enters with unit rate.
        let e = parse("t*x", &t).unwrap();
        let dot = total_derivative(&e, &t).unwrap();
        let expect = parse("x + t*v", &t).unwrap();
        assert_same(&dot, &expect, &t);
    }

    #[test]
    fn missing_prolongation_is_an_error() {
        let t = table();
        let e = parse("x + v", &t).unwrap();
        match total_derivative(&e, &t) {
            Err(SymError::MissingProlongation { name }) => assert_eq!(name, "x"),
            other => panic!("expected MissingProlongation, got {other:?}"),
        }
    }
}
