//! Property-based checks on the expression kernel: the plain printer must
//! round-trip structurally through the parser, and the canonical printer
//! must preserve values even though it reorders terms.

use proptest::prelude::*;

use ocsr_core::symexpr::{
    eval_at, parse, print_canonical, print_expr, Expr, UnaryFn, VarId, VarKind, VarTable,
};

/// A table-independent recipe for building a random expression. Materialized
/// against a fixed variable table inside each test case.
#[derive(Debug, Clone)]
enum Recipe {
    Leaf(usize),
    Const(i32),
    Add(Box<Recipe>, Box<Recipe>),
    Sub(Box<Recipe>, Box<Recipe>),
    Mul(Box<Recipe>, Box<Recipe>),
    Div(Box<Recipe>, Box<Recipe>),
    Neg(Box<Recipe>),
    Pow(Box<Recipe>, u32),
    Fun(u8, Box<Recipe>),
}

impl Recipe {
    fn materialize(&self, vars: &[VarId]) -> Expr {
        match self {
            Recipe::Leaf(i) => Expr::var(vars[i % vars.len()]),
            Recipe::Const(c) => Expr::constant(*c as f64 / 10.0),
            Recipe::Add(a, b) => Expr::add(&a.materialize(vars), &b.materialize(vars)),
            Recipe::Sub(a, b) => Expr::sub(&a.materialize(vars), &b.materialize(vars)),
            Recipe::Mul(a, b) => Expr::mul(&a.materialize(vars), &b.materialize(vars)),
            Recipe::Div(a, b) => Expr::div(&a.materialize(vars), &b.materialize(vars)),
            Recipe::Neg(a) => Expr::neg(&a.materialize(vars)),
            Recipe::Pow(a, k) => {
                Expr::pow(&a.materialize(vars), &Expr::constant(*k as f64))
            }
            Recipe::Fun(f, a) => {
                let f = match f % 3 {
                    0 => UnaryFn::Sin,
                    1 => UnaryFn::Cos,
                    _ => UnaryFn::Exp,
                };
                Expr::func(f, &a.materialize(vars))
            }
        }
    }
}

fn recipes() -> impl Strategy<Value = Recipe> {
    let leaf = prop_oneof![
        (0usize..5).prop_map(Recipe::Leaf),
        (-30i32..=30).prop_map(Recipe::Const),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Recipe::Add(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Recipe::Sub(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Recipe::Mul(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Recipe::Div(a.into(), b.into())),
            inner.clone().prop_map(|a| Recipe::Neg(a.into())),
            (inner.clone(), 2u32..=3).prop_map(|(a, k)| Recipe::Pow(a.into(), k)),
            (0u8..3, inner).prop_map(|(f, a)| Recipe::Fun(f, a.into())),
        ]
    })
}

fn test_table() -> (VarTable, Vec<VarId>) {
    let mut table = VarTable::new();
    let mut vars = vec![table.register("t", VarKind::Time).unwrap()];
    vars.push(table.register("x", VarKind::State).unwrap());
    vars.push(table.register("y", VarKind::State).unwrap());
    vars.push(table.register("v", VarKind::Velocity).unwrap());
    vars.push(table.register("u", VarKind::Control).unwrap());
    (table, vars)
}

proptest! {
    /// The plain printer emits text the parser maps back to the *same* tree.
    #[test]
    fn printing_round_trips_structurally(recipe in recipes()) {
        let (table, vars) = test_table();
        let e = recipe.materialize(&vars);
        let printed = print_expr(&e, &table);
        let back = parse(&printed, &table).expect("printed text parses");
        prop_assert_eq!(&back, &e, "`{}` re-parsed differently", printed);
    }

    /// The canonical printer may reorder and regroup, but never changes the
    /// value of the expression at any well-defined point.
    #[test]
    fn canonical_printing_preserves_values(
        recipe in recipes(),
        coords in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let (table, vars) = test_table();
        let e = recipe.materialize(&vars);
        let back = parse(&print_canonical(&e, &table), &table).expect("canonical text parses");
        let point = &coords[..table.len()];
        if let (Ok(a), Ok(b)) = (eval_at(&e, point), eval_at(&back, point)) {
            if a.abs() < 1e12 && b.abs() < 1e12 {
                let err = (a - b).abs() / (1.0 + a.abs().max(b.abs()));
                prop_assert!(err < 1e-9, "value changed: {a} vs {b} for `{}`",
                    print_canonical(&e, &table));
            }
        }
    }
}
