//! Input formats, encodings and the brute-force oracle.

pub mod abstraction;
pub mod native;
pub mod oracle;
pub mod random;
pub mod smtlib;

pub use abstraction::{abstract_variables, encode_atom_indicator, Abstraction, EncodeError};
pub use native::{parse_constraint, parse_native, print_native, ParseError};
pub use oracle::{brute_force_solve, brute_force_solve_capped, OracleError};
pub use smtlib::{parse_smtlib, SmtError, SmtProblem};
