//! Linear-combination certificates.
//!
//! A [`Combination`] scales rows (constraints) and sums them in `>=` form:
//! a `>=` row contributes `k*lhs >= k*rhs` for `k >= 0`, a `<=` row contributes
//! `-k*lhs >= -k*rhs` for `k >= 0`, and an `=` row contributes `k*lhs >= k*rhs`
//! for any sign of `k`. The resulting inequality is implied by the rows over the
//! rationals. Farkas refutations, dual bounds and Chvátal–Gomory derivations are
//! all checked on top of this one operation.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::model::{LinConstraint, LinExpr, ObjValue, Relation, VarId};
use crate::num::{ceil, is_integral, Int, Rat};

pub type RatExpr = BTreeMap<VarId, Rat>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("row `{0}` is not available in the subproblem")]
    RowUnavailable(LinConstraint),
    #[error("inequality row `{0}` has a negative multiplier")]
    NegativeMultiplier(LinConstraint),
    #[error("combined coefficients are not integral")]
    NonIntegral,
    #[error("combination is not a contradiction")]
    NotContradiction,
    #[error("combination does not reproduce the objective")]
    ObjectiveMismatch,
    #[error("claimed bound {claimed} exceeds the certified bound {certified}")]
    BoundTooStrong { claimed: ObjValue, certified: ObjValue },
    #[error("derivation does not imply `{0}`")]
    NotImplied(LinConstraint),
    #[error("derivation has no steps")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multiplier {
    pub row: LinConstraint,
    #[serde(with = "crate::num::serde_rat")]
    pub factor: Rat,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Combination {
    pub terms: Vec<Multiplier>,
}

fn add_scaled(acc: &mut RatExpr, e: &LinExpr, k: &Rat) {
    for (v, c) in e.iter() {
        let entry = acc.entry(v.clone()).or_insert_with(Rat::zero);
        *entry += Rat::from_integer(c.clone()) * k;
        if entry.is_zero() {
            acc.remove(v);
        }
    }
}

impl Combination {
    pub fn new() -> Self {
        Combination::default()
    }

    /// Adds `factor` to the multiplier of `row`, merging repeated rows.
    pub fn push(&mut self, row: LinConstraint, factor: Rat) {
        if factor.is_zero() {
            return;
        }
        if let Some(m) = self.terms.iter_mut().find(|m| m.row == row) {
            m.factor += factor;
        } else {
            self.terms.push(Multiplier { row, factor });
        }
        self.terms.retain(|m| !m.factor.is_zero());
    }

    pub fn rows(&self) -> impl Iterator<Item = &LinConstraint> {
        self.terms.iter().map(|m| &m.row)
    }

    /// Sums the scaled rows into `expr >= rhs`, checking multiplier signs.
    pub fn combine(&self) -> Result<(RatExpr, Rat), CertError> {
        let mut expr = RatExpr::new();
        let mut rhs = Rat::zero();
        for m in &self.terms {
            let row = m.row.normalize();
            let k = match row.rel {
                Relation::Ge => {
                    if m.factor.is_negative() {
                        return Err(CertError::NegativeMultiplier(m.row.clone()));
                    }
                    m.factor.clone()
                }
                Relation::Le => {
                    if m.factor.is_negative() {
                        return Err(CertError::NegativeMultiplier(m.row.clone()));
                    }
                    -m.factor.clone()
                }
                Relation::Eq => m.factor.clone(),
                Relation::Lt | Relation::Gt => unreachable!("normalized"),
            };
            add_scaled(&mut expr, &row.lhs, &k);
            rhs += Rat::from_integer(row.rhs.clone()) * k;
        }
        Ok((expr, rhs))
    }

    pub fn check_rows(&self, available: &dyn Fn(&LinConstraint) -> bool) -> Result<(), CertError> {
        for m in &self.terms {
            if !available(&m.row) {
                return Err(CertError::RowUnavailable(m.row.clone()));
            }
        }
        Ok(())
    }

    /// Checks that the rows are available and sum to `0 >= r` with `r > 0`.
    pub fn verify_refutation(
        &self,
        available: &dyn Fn(&LinConstraint) -> bool,
    ) -> Result<(), CertError> {
        self.check_rows(available)?;
        let (expr, rhs) = self.combine()?;
        if expr.is_empty() && rhs.is_positive() {
            Ok(())
        } else {
            Err(CertError::NotContradiction)
        }
    }

    /// Chvátal–Gomory rounding of the combination: `expr >= ceil(rhs)`.
    pub fn round(&self) -> Result<LinConstraint, CertError> {
        let (expr, rhs) = self.combine()?;
        cg_round(&expr, &rhs).ok_or(CertError::NonIntegral)
    }
}

/// Rounds `expr >= rhs` to `expr >= ceil(rhs)` when `expr` has integer coefficients.
pub fn cg_round(expr: &RatExpr, rhs: &Rat) -> Option<LinConstraint> {
    let mut lhs = LinExpr::new();
    for (v, c) in expr {
        if !is_integral(c) {
            return None;
        }
        lhs.add_term(v.clone(), c.to_integer());
    }
    Some(LinConstraint::new(lhs, Relation::Ge, ceil(rhs)))
}

/// Whether the derived `>=` constraints jointly imply `claim` syntactically:
/// every `>=` form `e >= r` of the claim has a derived `e >= r'` with `r' >= r`.
pub fn implied_by(claim: &LinConstraint, derived: &[LinConstraint]) -> bool {
    let forms: Vec<(LinExpr, Int)> = derived.iter().flat_map(|d| d.ge_forms()).collect();
    claim
        .ge_forms()
        .iter()
        .all(|(e, r)| forms.iter().any(|(de, dr)| de == e && dr >= r))
}

/// A multi-round Chvátal–Gomory derivation. Each step combines available rows
/// and the results of earlier steps, then rounds the right-hand side up.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CgProof {
    pub steps: Vec<Combination>,
}

impl CgProof {
    pub fn single(step: Combination) -> Self {
        CgProof { steps: vec![step] }
    }

    /// Checks every step and returns the derived constraints in order.
    pub fn derive(
        &self,
        available: &dyn Fn(&LinConstraint) -> bool,
    ) -> Result<Vec<LinConstraint>, CertError> {
        if self.steps.is_empty() {
            return Err(CertError::Empty);
        }
        let mut derived: Vec<LinConstraint> = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            for row in step.rows() {
                if !available(row) && !derived.contains(row) {
                    return Err(CertError::RowUnavailable(row.clone()));
                }
            }
            derived.push(step.round()?);
        }
        Ok(derived)
    }

    /// Checks that the derivation yields `claim`.
    pub fn verify_claim(
        &self,
        claim: &LinConstraint,
        available: &dyn Fn(&LinConstraint) -> bool,
    ) -> Result<(), CertError> {
        let derived = self.derive(available)?;
        if implied_by(claim, &derived) {
            Ok(())
        } else {
            Err(CertError::NotImplied(claim.clone()))
        }
    }

    /// Checks that the derivation ends in `0 >= r` with `r > 0`.
    pub fn verify_refutation(
        &self,
        available: &dyn Fn(&LinConstraint) -> bool,
    ) -> Result<(), CertError> {
        let derived = self.derive(available)?;
        let last = derived.last().ok_or(CertError::Empty)?;
        if last.lhs.is_empty() && last.rhs.is_positive() {
            Ok(())
        } else {
            Err(CertError::NotContradiction)
        }
    }
}

/// Two derivations bounding `lhs` from both sides of an equality `lhs = rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EqualityProof {
    pub lower: CgProof,
    pub upper: CgProof,
}

impl EqualityProof {
    pub fn verify(
        &self,
        claim: &LinConstraint,
        available: &dyn Fn(&LinConstraint) -> bool,
    ) -> Result<(), CertError> {
        let ge = LinConstraint::new(claim.lhs.clone(), Relation::Ge, claim.rhs.clone());
        let le = LinConstraint::new(claim.lhs.clone(), Relation::Le, claim.rhs.clone());
        self.lower.verify_claim(&ge, available)?;
        self.upper.verify_claim(&le, available)
    }
}

/// A dual certificate that the objective is at least `bound` over a subproblem.
///
/// Either the combination reproduces the objective exactly (then
/// `O >= ceil(rhs)` over integer points), or it is a refutation (then any bound
/// holds vacuously). `NegInf` needs no evidence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbDual {
    pub bound: ObjValue,
    pub combination: Combination,
}

impl LbDual {
    pub fn verify(
        &self,
        objective: &LinExpr,
        available: &dyn Fn(&LinConstraint) -> bool,
    ) -> Result<(), CertError> {
        if self.bound == ObjValue::NegInf {
            return Ok(());
        }
        self.combination.check_rows(available)?;
        let (expr, rhs) = self.combination.combine()?;
        if expr.is_empty() && rhs.is_positive() {
            return Ok(());
        }
        let mut target = RatExpr::new();
        add_scaled(&mut target, objective, &Rat::from_integer(Int::from(1)));
        if expr != target {
            return Err(CertError::ObjectiveMismatch);
        }
        let certified = ObjValue::Finite(ceil(&rhs));
        if self.bound <= certified {
            Ok(())
        } else {
            Err(CertError::BoundTooStrong {
                claimed: self.bound.clone(),
                certified,
            })
        }
    }
}
