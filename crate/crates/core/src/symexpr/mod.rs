//! Symbolic expression kernel: variables, expression trees, parsing,
//! printing, calculus, and randomized numeric testing.
//!
//! The kernel is deliberately small. Expressions are immutable trees over a
//! per-problem [`VarTable`]; simplification is shallow and value-preserving;
//! identity questions ("is this expression zero on the sample domain?") are
//! answered probabilistically by [`Sampler`] rather than by normal forms.

mod calculus;
mod expr;
mod numeric;
mod parse;
mod print;
mod table;

pub use calculus::{diff, total_derivative};
pub use expr::{Expr, ExprNode, UnaryFn};
pub use numeric::{
    eval, eval_at, eval_with_scale, Sampler, SamplerConfig, Truth, DEFAULT_SEED,
};
pub use parse::parse;
pub use print::{print_canonical, print_expr};
pub use table::{ParamSpec, Var, VarId, VarKind, VarTable, FUNCTION_NAMES};

use thiserror::Error;

/// Errors produced by the symbolic kernel.
#[derive(Debug, Error)]
pub enum SymError {
    /// Identifier does not match `[A-Za-z_][A-Za-z0-9_]*`.
    #[error("invalid identifier `{name}`")]
    InvalidName { name: String },

    /// Identifier collides with a built-in function name.
    #[error("identifier `{name}` is reserved for a built-in function")]
    ReservedName { name: String },

    /// Identifier already registered in the table.
    #[error("duplicate identifier `{name}`")]
    DuplicateName { name: String },

    /// The variable table is limited to [`VarTable::MAX_VARS`] entries.
    #[error("variable table full")]
    TableFull,

    /// Syntax error while parsing an expression string.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Parsed identifier is not registered in the variable table.
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    /// Evaluation left the function's domain (log of a non-positive value,
    /// division by zero, …) or produced a non-finite result.
    #[error("domain error evaluating `{context}`: {message}")]
    Domain { context: String, message: String },

    /// Randomized testing could not decide a property: every sample point
    /// fell outside the expression's domain.
    #[error("undecidable: no valid sample points for `{context}`")]
    Undecidable { context: String },

    /// A total time derivative needed the prolongation of a variable that
    /// has none registered.
    #[error("missing prolongation for variable `{name}`")]
    MissingProlongation { name: String },

    /// A parameter has neither a fixed value nor a sampling range when a
    /// concrete number was required.
    #[error("parameter `{name}` has no value")]
    MissingValue { name: String },
}
