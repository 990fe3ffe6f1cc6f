//! Branch-and-cut modulo theories.
//!
//! This crate decides and optimizes integer linear programs whose constraints
//! are extended with interface atoms interpreted in a background theory. The
//! shipped theory is equality with uninterpreted functions (EUF).
//!
//! The pieces fit together as follows:
//!
//! - [`model`] holds the exact-arithmetic data model (expressions, constraints,
//!   simple equalities, subproblems, assignments, instances).
//! - [`lp`] is an exact rational simplex producing Farkas, dual and ray
//!   certificates, interval propagation, and Chvátal–Gomory cuts.
//! - [`euf`] is the congruence-closure theory solver.
//! - [`kernel`] is the trusted rule checker. Every search action is a [`kernel::Step`]
//!   carrying a certificate, and traces can be replayed from scratch.
//! - [`engine`] is the branch-and-cut search strategy that emits kernel steps.
//! - [`frontend`] parses the native `.imt` format and an SMT-LIB subset,
//!   performs variable abstraction and Boolean/big-M encodings, and provides a
//!   brute-force oracle.

pub mod cert;
pub mod engine;
pub mod euf;
pub mod frontend;
pub mod kernel;
pub mod lp;
pub mod model;
pub mod num;
pub mod theory;

pub use engine::{solve, Config, SolveResult, SolveStatus};
pub use model::{
    Assignment, Bounds, ImtInstance, Incumbent, InterfaceAtom, LinConstraint, LinExpr, ObjValue,
    Relation, SimpleEquality, Subproblem, SubproblemId, VarId,
};
pub use num::{Int, Rat};
