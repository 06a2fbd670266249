//! Symbolic derivation and numerical integration of optimal-control
//! extremals via a unified Hamiltonian formalism.
//!
//! The crate takes an optimal control problem — explicit (`q̇ = F(t, q, u)`),
//! implicit/descriptor (`Ψ(t, q, q̇, u) = 0`), or controlled Lagrangian — and
//! mechanizes the first-order necessary conditions for normal extremals:
//!
//! 1. [`problem`] parses and validates the problem description and lowers
//!    the explicit and Lagrangian forms onto the common implicit one.
//! 2. [`pontryagin`] builds the Hamiltonian on the lifted phase space,
//!    the stationarity conditions, and the evolution-field ansatz whose
//!    unknown coefficients the derivation must determine.
//! 3. [`constraint_engine`] runs the tangency iteration: each constraint
//!    must be preserved by the evolution field, which alternately fixes
//!    field coefficients and spawns new constraints until the field is
//!    determined on a final constraint set (or the problem is exposed as
//!    inconsistent or beyond the engine's linear solver).
//! 4. [`integrate`] turns a determined field into trajectories: projection
//!    onto the constraint set, fixed-step integration with invariant
//!    monitoring, two-point boundary value solving, and cost evaluation.
//!
//! Everything symbolic is built on [`symexpr`], a small expression kernel
//! whose identity tests are randomized and seeded rather than algebraic, so
//! derivations are deterministic for a given seed and configuration.

pub mod constraint_engine;
pub mod integrate;
pub mod pontryagin;
pub mod problem;
pub mod symexpr;
