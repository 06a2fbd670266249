//! Expression printing.
//!
//! Two printers share one precedence-aware renderer:
//!
//! * [`print_expr`] emits minimal parentheses so that re-parsing the output
//!   reproduces the original tree node-for-node (the parser's shallow
//!   constructors fold `-c` on constants, which the printer anticipates).
//! * [`print_canonical`] flattens sum and product chains and orders the
//!   operands deterministically before rendering, so equal-modulo-reordering
//!   derivations print identically across runs. Canonical output is for
//!   reports; it re-parses to an equal *value*, not necessarily the same tree.

use crate::symexpr::expr::{Expr, ExprNode};
use crate::symexpr::table::VarTable;

/// Operator precedence used for parenthesization. Higher binds tighter.
fn prec(e: &Expr) -> u8 {
    match e.node() {
        ExprNode::Add(_, _) | ExprNode::Sub(_, _) => 1,
        ExprNode::Mul(_, _) | ExprNode::Div(_, _) => 2,
        ExprNode::Neg(_) => 3,
        ExprNode::Const(c) if *c < 0.0 => 3,
        ExprNode::Pow(_, _) => 4,
        _ => 5,
    }
}

fn render(e: &Expr, table: &VarTable, min_prec: u8, out: &mut String) {
    let needs_parens = prec(e) < min_prec;
    if needs_parens {
        out.push('(');
    }
    match e.node() {
        ExprNode::Const(c) => {
            out.push_str(&format!("{c}"));
        }
        ExprNode::Var(v) => out.push_str(table.name(*v)),
        ExprNode::Add(a, b) => {
            render(a, table, 1, out);
            out.push_str(" + ");
            render(b, table, 2, out);
        }
        ExprNode::Sub(a, b) => {
            render(a, table, 1, out);
            out.push_str(" - ");
            render(b, table, 2, out);
        }
        ExprNode::Mul(a, b) => {
            render(a, table, 2, out);
            out.push('*');
            render(b, table, 3, out);
        }
        ExprNode::Div(a, b) => {
            render(a, table, 2, out);
            out.push('/');
            render(b, table, 3, out);
        }
        ExprNode::Pow(a, b) => {
            render(a, table, 5, out);
            out.push('^');
            render(b, table, 3, out);
        }
        ExprNode::Neg(a) => {
            out.push('-');
            render(a, table, 3, out);
        }
        ExprNode::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            render(a, table, 1, out);
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

/// Render `e` with variable names from `table` and minimal parentheses.
///
/// Re-parsing the result against the same table reproduces `e` exactly.
pub fn print_expr(e: &Expr, table: &VarTable) -> String {
    let mut out = String::new();
    render(e, table, 0, &mut out);
    out
}

/// Signed term of a flattened sum.
struct Term {
    negated: bool,
    text: String,
}

fn collect_terms(e: &Expr, table: &VarTable, negated: bool, terms: &mut Vec<Term>) {
    match e.node() {
        ExprNode::Add(a, b) => {
            collect_terms(a, table, negated, terms);
            collect_terms(b, table, negated, terms);
        }
        ExprNode::Sub(a, b) => {
            collect_terms(a, table, negated, terms);
            collect_terms(b, table, !negated, terms);
        }
        ExprNode::Neg(a) => collect_terms(a, table, !negated, terms),
        ExprNode::Const(c) if *c < 0.0 => {
            let flipped = Expr::constant(-c);
            collect_terms(&flipped, table, !negated, terms);
        }
        _ => terms.push(Term {
            negated,
            // Terms sit in `+`/`-` chains, so render at the precedence a
            // right-hand addend needs.
            text: canonical_at(e, table, 2),
        }),
    }
}

fn collect_factors(e: &Expr, table: &VarTable, factors: &mut Vec<String>) {
    match e.node() {
        ExprNode::Mul(a, b) => {
            collect_factors(a, table, factors);
            collect_factors(b, table, factors);
        }
        _ => factors.push(canonical_at(e, table, 3)),
    }
}

/// Canonical rendering of `e` assuming the context requires precedence
/// `min_prec`; wraps in parentheses when the node binds looser.
fn canonical_at(e: &Expr, table: &VarTable, min_prec: u8) -> String {
    let body = match e.node() {
        ExprNode::Add(_, _) | ExprNode::Sub(_, _) => {
            let mut terms = Vec::new();
            collect_terms(e, table, false, &mut terms);
            terms.sort_by(|a, b| a.text.cmp(&b.text).then(a.negated.cmp(&b.negated)));
            let mut s = String::new();
            for (i, term) in terms.iter().enumerate() {
                if i == 0 {
                    if term.negated {
                        s.push('-');
                    }
                } else if term.negated {
                    s.push_str(" - ");
                } else {
                    s.push_str(" + ");
                }
                s.push_str(&term.text);
            }
            s
        }
        ExprNode::Mul(_, _) => {
            let mut factors = Vec::new();
            collect_factors(e, table, &mut factors);
            factors.sort();
            factors.join("*")
        }
        ExprNode::Div(a, b) => format!(
            "{}/{}",
            canonical_at(a, table, 2),
            canonical_at(b, table, 3)
        ),
        ExprNode::Pow(a, b) => format!(
            "{}^{}",
            canonical_at(a, table, 5),
            canonical_at(b, table, 3)
        ),
        ExprNode::Neg(a) => format!("-{}", canonical_at(a, table, 3)),
        ExprNode::Func(f, a) => format!("{}({})", f.name(), canonical_at(a, table, 1)),
        ExprNode::Const(c) => format!("{c}"),
        ExprNode::Var(v) => table.name(*v).to_string(),
    };
    if prec(e) < min_prec {
        format!("({body})")
    } else {
        body
    }
}

/// Render `e` with sum/product operands flattened and sorted, for
/// deterministic report output.
pub fn print_canonical(e: &Expr, table: &VarTable) -> String {
    canonical_at(e, table, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse::parse;
    use crate::symexpr::table::{VarKind, VarTable};

    fn table() -> VarTable {
        let mut t = VarTable::new();
        t.register("x", VarKind::State).unwrap();
        t.register("y", VarKind::State).unwrap();
        t.register("z", VarKind::Control).unwrap();
        t
    }

    fn roundtrip(src: &str, t: &VarTable) {
        let e = parse(src, t).unwrap();
        let printed = print_expr(&e, t);
        let back = parse(&printed, t).unwrap();
        assert_eq!(e, back, "round-trip changed `{src}` -> `{printed}`");
    }

    #[test]
    fn roundtrips_preserve_structure() {
        let t = table();
        for src in [
            "x + y*z",
            "x - (y - z)",
            "x - y - z",
            "-(x*y)",
            "-x^2",
            "(-x)^2",
            "x^-2",
            "x^y^z",
            "(x^y)^z",
            "x/(y*z)",
            "x/y*z",
            "x*(y/z)",
            "sin(x + y)",
            "x + -2.5",
            "2*x/(3*y)",
            "sqrt(x^2 + y^2)",
        ] {
            roundtrip(src, &t);
        }
    }

    #[test]
    fn canonical_orders_operands() {
        let t = table();
        let a = parse("y*x + z + x*y", &t).unwrap();
        let b = parse("z + x*y + x*y", &t).unwrap();
        assert_eq!(print_canonical(&a, &t), print_canonical(&b, &t));
    }

    #[test]
    fn canonical_handles_signs() {
        let t = table();
        let e = parse("x - y - -z", &t).unwrap();
        let s = print_canonical(&e, &t);
        let back = parse(&s, &t).unwrap();
        // Value-equal even though the tree may re-associate.
        let diff = crate::symexpr::expr::Expr::sub(&e, &back);
        let mut vals = std::collections::HashMap::new();
        vals.insert(t.lookup("x").unwrap(), 0.3);
        vals.insert(t.lookup("y").unwrap(), -1.7);
        vals.insert(t.lookup("z").unwrap(), 2.2);
        let v = crate::symexpr::numeric::eval(&diff, &|id| vals[&id]).unwrap();
        assert!(v.abs() < 1e-12);
    }
}
