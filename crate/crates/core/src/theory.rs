//! Theory literals, verdicts and endorsement tokens.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use crate::model::{InterfaceAtom, LinConstraint, LinExpr, Relation, VarId};
use crate::num::Int;

/// A literal over interface variables that a theory solver can check.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TheoryLiteral {
    /// `left = right + offset`
    VarEq {
        left: VarId,
        right: VarId,
        #[serde(with = "crate::num::serde_int")]
        offset: Int,
    },
    /// `left != right + offset`
    VarDiseq {
        left: VarId,
        right: VarId,
        #[serde(with = "crate::num::serde_int")]
        offset: Int,
    },
    /// The atom annotated by `var` holds (`var = 1`).
    AtomTrue { var: VarId },
    /// The atom annotated by `var` fails (`var = 0`).
    AtomFalse { var: VarId },
}

impl TheoryLiteral {
    pub fn var_eq(left: VarId, right: VarId) -> Self {
        TheoryLiteral::VarEq { left, right, offset: Int::from(0) }
    }

    pub fn var_diseq(left: VarId, right: VarId) -> Self {
        TheoryLiteral::VarDiseq { left, right, offset: Int::from(0) }
    }

    pub fn negated(&self) -> TheoryLiteral {
        match self.clone() {
            TheoryLiteral::VarEq { left, right, offset } => TheoryLiteral::VarDiseq { left, right, offset },
            TheoryLiteral::VarDiseq { left, right, offset } => TheoryLiteral::VarEq { left, right, offset },
            TheoryLiteral::AtomTrue { var } => TheoryLiteral::AtomFalse { var },
            TheoryLiteral::AtomFalse { var } => TheoryLiteral::AtomTrue { var },
        }
    }

    /// Integer linearizations whose disjunction is equivalent to the literal.
    pub fn linearize(&self) -> Vec<LinConstraint> {
        let one = Int::from(1);
        match self {
            TheoryLiteral::VarEq { left, right, offset } => {
                vec![LinConstraint::new(LinExpr::difference(left, right), Relation::Eq, offset.clone())]
            }
            TheoryLiteral::VarDiseq { left, right, offset } => vec![
                LinConstraint::new(LinExpr::difference(left, right), Relation::Le, offset - &one),
                LinConstraint::new(LinExpr::difference(left, right), Relation::Ge, offset + &one),
            ],
            TheoryLiteral::AtomTrue { var } => {
                vec![LinConstraint::new(LinExpr::var(var.clone()), Relation::Ge, one)]
            }
            TheoryLiteral::AtomFalse { var } => {
                vec![LinConstraint::new(LinExpr::var(var.clone()), Relation::Le, Int::from(0))]
            }
        }
    }
}

impl fmt::Display for TheoryLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shifted = |f: &mut fmt::Formatter<'_>, l: &VarId, op: &str, r: &VarId, c: &Int| {
            if c == &Int::from(0) {
                write!(f, "{l} {op} {r}")
            } else {
                write!(f, "{l} {op} {r} + {c}")
            }
        };
        match self {
            TheoryLiteral::VarEq { left, right, offset } => shifted(f, left, "=", right, offset),
            TheoryLiteral::VarDiseq { left, right, offset } => shifted(f, left, "!=", right, offset),
            TheoryLiteral::AtomTrue { var } => write!(f, "atom({var})"),
            TheoryLiteral::AtomFalse { var } => write!(f, "!atom({var})"),
        }
    }
}

impl fmt::Debug for TheoryLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Sat,
    Unsat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TheoryResult {
    Sat,
    /// A subset of the input literals that is already unsatisfiable.
    Unsat { core: Vec<TheoryLiteral> },
}

/// A theory solver's signed statement about a literal set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryToken {
    pub theory: String,
    pub verdict: Verdict,
    pub digest: String,
}

pub trait Theory {
    fn name(&self) -> &str;

    /// Decides the conjunction of `literals` under the base facts of `atoms`.
    fn check(&self, atoms: &[InterfaceAtom], literals: &[TheoryLiteral]) -> TheoryResult;

    fn endorse(&self, atoms: &[InterfaceAtom], literals: &[TheoryLiteral]) -> TheoryToken {
        let verdict = match self.check(atoms, literals) {
            TheoryResult::Sat => Verdict::Sat,
            TheoryResult::Unsat { .. } => Verdict::Unsat,
        };
        TheoryToken {
            theory: self.name().to_string(),
            verdict,
            digest: token_digest(self.name(), verdict, atoms, literals),
        }
    }

    /// Re-checks the literal set and compares with the token.
    fn verify_token(
        &self,
        atoms: &[InterfaceAtom],
        literals: &[TheoryLiteral],
        token: &TheoryToken,
    ) -> bool {
        token.theory == self.name() && self.endorse(atoms, literals) == *token
    }
}

pub fn token_digest(
    theory: &str,
    verdict: Verdict,
    atoms: &[InterfaceAtom],
    literals: &[TheoryLiteral],
) -> String {
    let mut h = Sha256::new();
    h.update(theory.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(&verdict).expect("serializable"));
    for a in atoms {
        h.update([0]);
        h.update(a.to_string().as_bytes());
    }
    h.update([1]);
    h.update(serde_json::to_vec(literals).expect("serializable"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
