//! The trusted rule checker.
//!
//! A [`Kernel`] owns a state `<P, A>` and admits one [`Step`] at a time. Every
//! step names its rule, its target subproblem and a certificate; the kernel
//! re-checks the certificate against the target before changing the state, and
//! rejects the step with a [`RuleViolation`] otherwise.

pub mod trace;

use indexmap::IndexMap;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

use crate::cert::{implied_by, CertError, CgProof, Combination, EqualityProof, LbDual};
use crate::euf::{arrangement, EufTheory};
use crate::model::{
    Assignment, ImtInstance, Incumbent, LinConstraint, LinExpr, ObjValue, Relation, SimpleEquality,
    Subproblem, SubproblemId, VarId,
};
use crate::num::Int;
use crate::theory::{Theory, TheoryLiteral, TheoryToken, Verdict};

pub use trace::{instance_digest, replay_trace, RejectReason, ReplayVerdict, Trace, TraceError, TraceHeader};

/// How a Branch step splits its target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchCert {
    /// `v <= k` or `v >= k + 1`.
    Dichotomy {
        var: VarId,
        #[serde(with = "crate::num::serde_int")]
        k: Int,
    },
    /// `x - y <= c - 1`, `x - y = c` or `x - y >= c + 1`.
    Trichotomy {
        x: VarId,
        y: VarId,
        #[serde(with = "crate::num::serde_int")]
        c: Int,
    },
    /// Sequential case split over the literals of a theory conflict core.
    ConflictSplit { core: Vec<TheoryLiteral> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DropCert {
    Farkas { combination: Combination },
    Cg { proof: CgProof },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetireEvidence {
    pub assignment: Assignment,
    pub lb_match: LbDual,
    pub token: TheoryToken,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnboundedEvidence {
    pub assignment: Assignment,
    pub ray: Assignment,
    pub token: TheoryToken,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TLemma {
    /// Literals entailed by the target, endorsed as T-inconsistent.
    pub asserted: Vec<TheoryLiteral>,
    /// Extra derivations used to show the literals are entailed.
    #[serde(default)]
    pub support: Vec<CgProof>,
    pub lemma: LinConstraint,
    pub token: TheoryToken,
}

/// One rule application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Step {
    Branch {
        target: SubproblemId,
        children: Vec<Vec<LinConstraint>>,
        cert: BranchCert,
    },
    Learn {
        target: SubproblemId,
        constraint: LinConstraint,
        proof: CgProof,
    },
    Forget {
        target: SubproblemId,
        constraint: LinConstraint,
        proof: CgProof,
    },
    Propagate {
        target: SubproblemId,
        equality: SimpleEquality,
        proof: EqualityProof,
    },
    Drop {
        target: SubproblemId,
        cert: DropCert,
    },
    Prune {
        target: SubproblemId,
        lb: LbDual,
    },
    Retire {
        target: SubproblemId,
        evidence: RetireEvidence,
    },
    Unbounded {
        target: SubproblemId,
        evidence: UnboundedEvidence,
    },
    #[serde(rename = "tlearn")]
    TLearn {
        target: SubproblemId,
        lemma: TLemma,
    },
    Subsume {
        target: SubproblemId,
        by: SubproblemId,
    },
}

impl Step {
    pub fn rule(&self) -> Rule {
        match self {
            Step::Branch { .. } => Rule::Branch,
            Step::Learn { .. } => Rule::Learn,
            Step::Forget { .. } => Rule::Forget,
            Step::Propagate { .. } => Rule::Propagate,
            Step::Drop { .. } => Rule::Drop,
            Step::Prune { .. } => Rule::Prune,
            Step::Retire { .. } => Rule::Retire,
            Step::Unbounded { .. } => Rule::Unbounded,
            Step::TLearn { .. } => Rule::TLearn,
            Step::Subsume { .. } => Rule::Subsume,
        }
    }

    pub fn target(&self) -> SubproblemId {
        match self {
            Step::Branch { target, .. }
            | Step::Learn { target, .. }
            | Step::Forget { target, .. }
            | Step::Propagate { target, .. }
            | Step::Drop { target, .. }
            | Step::Prune { target, .. }
            | Step::Retire { target, .. }
            | Step::Unbounded { target, .. }
            | Step::TLearn { target, .. }
            | Step::Subsume { target, .. } => *target,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Branch,
    Learn,
    Forget,
    Propagate,
    Drop,
    Prune,
    Retire,
    Unbounded,
    TLearn,
    Subsume,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleViolation {
    #[error("subproblem {0} is not in the state")]
    UnknownSubproblem(SubproblemId),
    #[error("branch needs at least two children")]
    TooFewChildren,
    #[error("branch children do not match the certificate")]
    ChildrenMismatch,
    #[error("branch children are not syntactically distinct")]
    DuplicateChildren,
    #[error("conflict split over an empty core")]
    EmptyCore,
    #[error("{rule:?} certificate rejected: {source}")]
    Certificate { rule: Rule, source: CertError },
    #[error("`{0}` is already present in the subproblem")]
    AlreadyPresent(String),
    #[error("`{0}` is not present in the subproblem")]
    NotPresent(String),
    #[error("prune requires an incumbent")]
    NoIncumbent,
    #[error("lower bound {bound} is below the incumbent objective {incumbent}")]
    BoundBelowIncumbent { bound: ObjValue, incumbent: ObjValue },
    #[error("assignment does not cover variable {0}")]
    AssignmentIncomplete(VarId),
    #[error("assignment is outside the bounds of {0}")]
    OutOfBounds(VarId),
    #[error("assignment violates `{0}`")]
    ConstraintViolated(String),
    #[error("theory token rejected")]
    TheoryRejected,
    #[error("objective {new} does not improve on {old}")]
    NotImproving { new: ObjValue, old: ObjValue },
    #[error("lower bound {bound} does not match the objective {value} of the assignment")]
    LbMismatch { bound: ObjValue, value: ObjValue },
    #[error("invalid ray: {0}")]
    InvalidRay(String),
    #[error("literal {0} is not entailed by the subproblem")]
    LiteralNotEntailed(TheoryLiteral),
    #[error("subproblem {target} is not subsumed by {by}")]
    NotSubsumed { target: SubproblemId, by: SubproblemId },
    #[error("branch budget of {0} steps exhausted")]
    BranchBudget(u64),
    #[error("more than {0} consecutive Learn/Forget/TLearn steps")]
    LearnRunBudget(u64),
}

impl RuleViolation {
    /// A short stable name for the violated side condition.
    pub fn name(&self) -> &'static str {
        match self {
            RuleViolation::UnknownSubproblem(_) => "unknown-subproblem",
            RuleViolation::TooFewChildren => "too-few-children",
            RuleViolation::ChildrenMismatch => "children-mismatch",
            RuleViolation::DuplicateChildren => "duplicate-children",
            RuleViolation::EmptyCore => "empty-core",
            RuleViolation::Certificate { .. } => "certificate",
            RuleViolation::AlreadyPresent(_) => "already-present",
            RuleViolation::NotPresent(_) => "not-present",
            RuleViolation::NoIncumbent => "no-incumbent",
            RuleViolation::BoundBelowIncumbent { .. } => "bound-below-incumbent",
            RuleViolation::AssignmentIncomplete(_) => "assignment-incomplete",
            RuleViolation::OutOfBounds(_) => "out-of-bounds",
            RuleViolation::ConstraintViolated(_) => "constraint-violated",
            RuleViolation::TheoryRejected => "theory-rejected",
            RuleViolation::NotImproving { .. } => "not-improving",
            RuleViolation::LbMismatch { .. } => "lb-mismatch",
            RuleViolation::InvalidRay(_) => "invalid-ray",
            RuleViolation::LiteralNotEntailed(_) => "literal-not-entailed",
            RuleViolation::NotSubsumed { .. } => "not-subsumed",
            RuleViolation::BranchBudget(_) => "branch-budget",
            RuleViolation::LearnRunBudget(_) => "learn-run-budget",
        }
    }
}

fn cert_err(rule: Rule) -> impl Fn(CertError) -> RuleViolation {
    move |source| RuleViolation::Certificate { rule, source }
}

/// Limits enforcing the termination discipline; `None` disables a limit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Budgets {
    pub max_branches: Option<u64>,
    pub max_learn_run: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub per_rule: BTreeMap<String, u64>,
    pub branches: u64,
    /// Current run of consecutive Learn/Forget/TLearn steps.
    pub learn_run: u64,
    pub longest_learn_run: u64,
}

impl Counters {
    pub fn count(&self, rule: Rule) -> u64 {
        self.per_rule.get(&format!("{rule:?}")).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct KernelState {
    pub subproblems: IndexMap<SubproblemId, Subproblem>,
    pub incumbent: Incumbent,
}

impl KernelState {
    pub fn is_final(&self) -> bool {
        self.subproblems.is_empty()
    }
}

/// The added constraints of each conflict-split child, with a flag marking
/// the children in which every core literal holds.
pub fn conflict_split_children(core: &[TheoryLiteral]) -> Vec<(Vec<LinConstraint>, bool)> {
    fn go(prefix: Vec<LinConstraint>, lits: &[TheoryLiteral], out: &mut Vec<(Vec<LinConstraint>, bool)>) {
        let Some((first, rest)) = lits.split_first() else {
            out.push((prefix, true));
            return;
        };
        for arm in first.negated().linearize() {
            let mut child = prefix.clone();
            child.push(arm);
            out.push((child, false));
        }
        for arm in first.linearize() {
            let mut next = prefix.clone();
            next.push(arm);
            go(next, rest, out);
        }
    }
    let mut out = Vec::new();
    go(Vec::new(), core, &mut out);
    out
}

/// The children a branch certificate prescribes.
pub fn branch_children(cert: &BranchCert) -> Vec<Vec<LinConstraint>> {
    let one = Int::from(1);
    match cert {
        BranchCert::Dichotomy { var, k } => vec![
            vec![LinConstraint::new(LinExpr::var(var.clone()), Relation::Le, k.clone())],
            vec![LinConstraint::new(LinExpr::var(var.clone()), Relation::Ge, k + &one)],
        ],
        BranchCert::Trichotomy { x, y, c } => {
            let d = LinExpr::difference(x, y);
            vec![
                vec![LinConstraint::new(d.clone(), Relation::Le, c - &one)],
                vec![LinConstraint::new(d.clone(), Relation::Eq, c.clone())],
                vec![LinConstraint::new(d, Relation::Ge, c + &one)],
            ]
        }
        BranchCert::ConflictSplit { core } => {
            conflict_split_children(core).into_iter().map(|(c, _)| c).collect()
        }
    }
}

/// The trusted checker together with its state.
pub struct Kernel {
    instance: ImtInstance,
    theory: Box<dyn Theory + Send + Sync>,
    state: KernelState,
    next_id: u64,
    budgets: Budgets,
    counters: Counters,
    bound_rows: Vec<LinConstraint>,
}

impl Kernel {
    /// A kernel in the starting state `<{<C, {}>}, none>` with the EUF theory.
    pub fn new(instance: &ImtInstance, budgets: Budgets) -> Self {
        Kernel::with_theory(instance, budgets, Box::new(EufTheory))
    }

    pub fn with_theory(
        instance: &ImtInstance,
        budgets: Budgets,
        theory: Box<dyn Theory + Send + Sync>,
    ) -> Self {
        let start = instance.starting_subproblem();
        let mut subproblems = IndexMap::new();
        subproblems.insert(start.id, start);
        Kernel {
            instance: instance.clone(),
            theory,
            state: KernelState { subproblems, incumbent: Incumbent::None },
            next_id: 1,
            budgets,
            counters: Counters::default(),
            bound_rows: instance.bounds.as_constraints(),
        }
    }

    pub fn state(&self) -> &KernelState {
        &self.state
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn instance(&self) -> &ImtInstance {
        &self.instance
    }

    pub fn theory(&self) -> &dyn Theory {
        self.theory.as_ref()
    }

    pub fn subproblem(&self, id: SubproblemId) -> Option<&Subproblem> {
        self.state.subproblems.get(&id)
    }

    fn get(&self, id: SubproblemId) -> Result<&Subproblem, RuleViolation> {
        self.state
            .subproblems
            .get(&id)
            .ok_or(RuleViolation::UnknownSubproblem(id))
    }

    /// `C`, rendered `D` and the instance bounds, normalized.
    pub fn available_rows(&self, sub: &Subproblem) -> HashSet<LinConstraint> {
        sub.rows()
            .into_iter()
            .chain(self.bound_rows.iter().cloned())
            .map(|r| r.normalize())
            .collect()
    }

    fn obj(&self, inc: &Incumbent) -> ObjValue {
        crate::model::obj_value(&self.instance.objective, inc).expect("incumbent is total")
    }

    /// Checks and applies one step. For Branch, returns the id of each child
    /// in order, `None` where the child coincided with an existing subproblem.
    pub fn apply(&mut self, step: &Step) -> Result<Vec<Option<SubproblemId>>, RuleViolation> {
        let rule = step.rule();
        if rule == Rule::Branch {
            if let Some(max) = self.budgets.max_branches {
                if self.counters.branches >= max {
                    return Err(RuleViolation::BranchBudget(max));
                }
            }
        }
        let learnish = matches!(rule, Rule::Learn | Rule::Forget | Rule::TLearn);
        if learnish {
            if let Some(max) = self.budgets.max_learn_run {
                if self.counters.learn_run >= max {
                    return Err(RuleViolation::LearnRunBudget(max));
                }
            }
        }
        let created = self.check_and_apply(step)?;
        *self.counters.per_rule.entry(format!("{rule:?}")).or_insert(0) += 1;
        if rule == Rule::Branch {
            self.counters.branches += 1;
        }
        if learnish {
            self.counters.learn_run += 1;
            self.counters.longest_learn_run =
                self.counters.longest_learn_run.max(self.counters.learn_run);
        } else {
            self.counters.learn_run = 0;
        }
        Ok(created)
    }

    fn check_and_apply(&mut self, step: &Step) -> Result<Vec<Option<SubproblemId>>, RuleViolation> {
        let target = step.target();
        let sub = self.get(target)?.clone();
        match step {
            Step::Branch { children, cert, .. } => {
                if let BranchCert::ConflictSplit { core } = cert {
                    if core.is_empty() {
                        return Err(RuleViolation::EmptyCore);
                    }
                }
                let expected = branch_children(cert);
                let norm = |cs: &[LinConstraint]| cs.iter().map(|c| c.normalize()).collect::<Vec<_>>();
                if children.len() != expected.len()
                    || children.iter().zip(&expected).any(|(a, b)| norm(a) != norm(b))
                {
                    return Err(RuleViolation::ChildrenMismatch);
                }
                if children.len() < 2 {
                    return Err(RuleViolation::TooFewChildren);
                }
                let subs: Vec<Subproblem> = children
                    .iter()
                    .map(|added| {
                        Subproblem::new(
                            SubproblemId(0),
                            sub.constraints.iter().cloned().chain(added.iter().cloned()),
                            sub.equalities.iter().cloned(),
                        )
                    })
                    .collect();
                for i in 0..subs.len() {
                    for j in i + 1..subs.len() {
                        if subs[i].same_sets(&subs[j]) {
                            return Err(RuleViolation::DuplicateChildren);
                        }
                    }
                }
                self.state.subproblems.shift_remove(&target);
                Ok(subs.into_iter().map(|s| self.insert(s)).collect())
            }
            Step::Learn { constraint, proof, .. } => {
                let c = constraint.normalize();
                if sub.constraints.contains(&c) {
                    return Err(RuleViolation::AlreadyPresent(c.to_string()));
                }
                let avail = self.available_rows(&sub);
                proof
                    .verify_claim(&c, &|r| avail.contains(&r.normalize()))
                    .map_err(cert_err(Rule::Learn))?;
                let mut next = sub;
                next.constraints.insert(c);
                self.replace(target, next);
                Ok(vec![])
            }
            Step::Forget { constraint, proof, .. } => {
                let c = constraint.normalize();
                if !sub.constraints.contains(&c) {
                    return Err(RuleViolation::NotPresent(c.to_string()));
                }
                let mut next = sub;
                next.constraints.shift_remove(&c);
                let avail = self.available_rows(&next);
                proof
                    .verify_claim(&c, &|r| avail.contains(&r.normalize()))
                    .map_err(cert_err(Rule::Forget))?;
                self.replace(target, next);
                Ok(vec![])
            }
            Step::Propagate { equality, proof, .. } => {
                if sub.equalities.contains(equality) {
                    return Err(RuleViolation::AlreadyPresent(equality.to_string()));
                }
                if let SimpleEquality::Diff { left, right, .. } = equality {
                    if left >= right {
                        return Err(RuleViolation::Certificate {
                            rule: Rule::Propagate,
                            source: CertError::NotImplied(equality.to_constraint()),
                        });
                    }
                }
                let avail = self.available_rows(&sub);
                proof
                    .verify(&equality.to_constraint(), &|r| avail.contains(&r.normalize()))
                    .map_err(cert_err(Rule::Propagate))?;
                let mut next = sub;
                next.equalities.insert(equality.clone());
                self.replace(target, next);
                Ok(vec![])
            }
            Step::Drop { cert, .. } => {
                let avail = self.available_rows(&sub);
                let avail = |r: &LinConstraint| avail.contains(&r.normalize());
                match cert {
                    DropCert::Farkas { combination } => combination.verify_refutation(&avail),
                    DropCert::Cg { proof } => proof.verify_refutation(&avail),
                }
                .map_err(cert_err(Rule::Drop))?;
                self.state.subproblems.shift_remove(&target);
                Ok(vec![])
            }
            Step::Prune { lb, .. } => {
                if self.state.incumbent == Incumbent::None {
                    return Err(RuleViolation::NoIncumbent);
                }
                let avail = self.available_rows(&sub);
                lb.verify(&self.instance.objective, &|r| avail.contains(&r.normalize()))
                    .map_err(cert_err(Rule::Prune))?;
                let incumbent = self.obj(&self.state.incumbent);
                if lb.bound < incumbent {
                    return Err(RuleViolation::BoundBelowIncumbent { bound: lb.bound.clone(), incumbent });
                }
                self.state.subproblems.shift_remove(&target);
                Ok(vec![])
            }
            Step::Retire { evidence, .. } => {
                let a = &evidence.assignment;
                self.check_model(&sub, a, &evidence.token)?;
                let new = self.obj(&Incumbent::Feasible(a.clone()));
                let old = self.obj(&self.state.incumbent);
                if new >= old {
                    return Err(RuleViolation::NotImproving { new, old });
                }
                let avail = self.available_rows(&sub);
                evidence
                    .lb_match
                    .verify(&self.instance.objective, &|r| avail.contains(&r.normalize()))
                    .map_err(cert_err(Rule::Retire))?;
                if evidence.lb_match.bound < new {
                    return Err(RuleViolation::LbMismatch {
                        bound: evidence.lb_match.bound.clone(),
                        value: new,
                    });
                }
                self.state.subproblems.shift_remove(&target);
                self.state.incumbent = Incumbent::Feasible(a.clone());
                Ok(vec![])
            }
            Step::Unbounded { evidence, .. } => {
                let a = &evidence.assignment;
                self.check_model(&sub, a, &evidence.token)?;
                let new = self.obj(&Incumbent::Feasible(a.clone()));
                let old = self.obj(&self.state.incumbent);
                if new > old {
                    return Err(RuleViolation::NotImproving { new, old });
                }
                self.check_ray(&sub, &evidence.ray)?;
                self.state.subproblems.clear();
                self.state.incumbent = Incumbent::Unbounded(a.clone());
                Ok(vec![])
            }
            Step::TLearn { lemma, .. } => {
                let c = lemma.lemma.normalize();
                if sub.constraints.contains(&c) {
                    return Err(RuleViolation::AlreadyPresent(c.to_string()));
                }
                let avail = self.available_rows(&sub);
                let is_avail = |r: &LinConstraint| avail.contains(&r.normalize());
                let mut known: Vec<LinConstraint> = avail.iter().cloned().collect();
                for p in &lemma.support {
                    known.extend(p.derive(&is_avail).map_err(cert_err(Rule::TLearn))?);
                }
                for lit in &lemma.asserted {
                    if !lit.linearize().iter().any(|l| implied_by(l, &known)) {
                        return Err(RuleViolation::LiteralNotEntailed(lit.clone()));
                    }
                }
                if lemma.token.verdict != Verdict::Unsat
                    || !self
                        .theory
                        .verify_token(&self.instance.atoms, &lemma.asserted, &lemma.token)
                {
                    return Err(RuleViolation::TheoryRejected);
                }
                let mut next = sub;
                next.constraints.insert(c);
                self.replace(target, next);
                Ok(vec![])
            }
            Step::Subsume { by, .. } => {
                let general = self.get(*by)?;
                let ok = *by != target
                    && general.constraints.iter().all(|c| sub.constraints.contains(c))
                    && general.equalities.iter().all(|d| sub.equalities.contains(d));
                if !ok {
                    return Err(RuleViolation::NotSubsumed { target, by: *by });
                }
                self.state.subproblems.shift_remove(&target);
                Ok(vec![])
            }
        }
    }

    /// `a` is a total in-bounds T-model of `sub` and the instance atoms.
    fn check_model(&self, sub: &Subproblem, a: &Assignment, token: &TheoryToken) -> Result<(), RuleViolation> {
        for v in &self.instance.vars {
            let x = a
                .get(v)
                .map_err(|_| RuleViolation::AssignmentIncomplete(v.clone()))?;
            if !self.instance.bounds.get(v).contains(x) {
                return Err(RuleViolation::OutOfBounds(v.clone()));
            }
        }
        for row in sub.rows() {
            let ok = row
                .satisfies(a)
                .map_err(|_| RuleViolation::AssignmentIncomplete(row.vars().next().unwrap().clone()))?;
            if !ok {
                return Err(RuleViolation::ConstraintViolated(row.to_string()));
            }
        }
        let literals = arrangement(&self.instance, a).map_err(|e| match e {
            crate::model::ModelError::MissingVariable(v) => RuleViolation::AssignmentIncomplete(v),
            _ => RuleViolation::TheoryRejected,
        })?;
        if token.verdict != Verdict::Sat
            || !self.theory.verify_token(&self.instance.atoms, &literals, token)
        {
            return Err(RuleViolation::TheoryRejected);
        }
        Ok(())
    }

    fn check_ray(&self, sub: &Subproblem, ray: &Assignment) -> Result<(), RuleViolation> {
        let bad = |m: &str| RuleViolation::InvalidRay(m.to_string());
        if ray.iter().all(|(_, r)| r.is_zero()) {
            return Err(bad("zero ray"));
        }
        let point = ray.to_rat_point();
        for (v, _) in ray.iter() {
            if !self.instance.vars.contains(v) {
                return Err(RuleViolation::InvalidRay(format!("unknown variable {v}")));
            }
        }
        let mut theory_vars = self.instance.theory_vars();
        theory_vars.extend(self.instance.annotation_vars());
        for v in &theory_vars {
            if ray.get(v).is_ok_and(|r| !r.is_zero()) {
                return Err(RuleViolation::InvalidRay(format!("moves theory variable {v}")));
            }
        }
        for row in sub.rows().into_iter().chain(self.bound_rows.iter().cloned()) {
            let row = row.normalize();
            let d = row.lhs.eval_rat(&point);
            let ok = match row.rel {
                Relation::Ge => !d.is_negative(),
                Relation::Le => !d.is_positive(),
                Relation::Eq => d.is_zero(),
                Relation::Lt | Relation::Gt => unreachable!("normalized"),
            };
            if !ok {
                return Err(RuleViolation::InvalidRay(format!("leaves `{row}`")));
            }
        }
        if !self.instance.objective.eval_rat(&point).is_negative() {
            return Err(bad("objective does not decrease"));
        }
        Ok(())
    }

    fn insert(&mut self, mut s: Subproblem) -> Option<SubproblemId> {
        if self.state.subproblems.values().any(|o| o.same_sets(&s)) {
            return None;
        }
        let id = SubproblemId(self.next_id);
        self.next_id += 1;
        s.id = id;
        self.state.subproblems.insert(id, s);
        Some(id)
    }

    /// Replaces `target` in place, merging it away if it now duplicates another.
    fn replace(&mut self, target: SubproblemId, next: Subproblem) {
        let dup = self
            .state
            .subproblems
            .iter()
            .any(|(id, o)| *id != target && o.same_sets(&next));
        if dup {
            self.state.subproblems.shift_remove(&target);
        } else {
            self.state.subproblems.insert(target, next);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarBounds;
    use crate::num::rat;

    fn c(s: &str) -> LinConstraint {
        s.parse().unwrap()
    }

    fn inst(cs: &[&str], vars: &[(&str, i64, i64)], obj: &str) -> ImtInstance {
        let mut i = ImtInstance::new();
        for (n, lo, hi) in vars {
            i.add_var(*n, VarBounds::closed(*lo, *hi));
        }
        for s in cs {
            i.add_constraint(c(s));
        }
        if !obj.is_empty() {
            i.objective = c(&format!("{obj} >= 0")).lhs;
        }
        i
    }

    #[test]
    fn drop_contradictory_pair() {
        let i = inst(&["x >= 1", "x <= 0"], &[("x", -5, 5)], "");
        let mut k = Kernel::new(&i, Budgets::default());
        let mut farkas = Combination::new();
        farkas.push(c("x >= 1"), rat(1, 1));
        farkas.push(c("x <= 0"), rat(1, 1));
        k.apply(&Step::Drop { target: SubproblemId(0), cert: DropCert::Farkas { combination: farkas } })
            .unwrap();
        assert!(k.state().is_final());
        assert_eq!(k.state().incumbent, Incumbent::None);
    }

    #[test]
    fn bad_farkas_is_rejected() {
        let i = inst(&["x >= 1", "x <= 3"], &[("x", -5, 5)], "");
        let mut k = Kernel::new(&i, Budgets::default());
        let mut farkas = Combination::new();
        farkas.push(c("x >= 1"), rat(1, 1));
        farkas.push(c("x <= 3"), rat(1, 1));
        let err = k
            .apply(&Step::Drop { target: SubproblemId(0), cert: DropCert::Farkas { combination: farkas } })
            .unwrap_err();
        assert_eq!(err.name(), "certificate");
        assert_eq!(k.state().subproblems.len(), 1);
    }

    #[test]
    fn dichotomy_branch_creates_two_children() {
        let i = inst(&["2*x + 3*y >= 12"], &[("x", 0, 10), ("y", 0, 10)], "x + y");
        let mut k = Kernel::new(&i, Budgets::default());
        let cert = BranchCert::Dichotomy { var: VarId::new("y"), k: Int::from(3) };
        let children = branch_children(&cert);
        let ids: Vec<SubproblemId> = k
            .apply(&Step::Branch { target: SubproblemId(0), children, cert })
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        assert_eq!(ids.len(), 2);
        let kids: Vec<_> = ids.iter().map(|id| k.subproblem(*id).unwrap()).collect();
        assert!(kids[0].constraints.contains(&c("y <= 3")));
        assert!(kids[1].constraints.contains(&c("y >= 4")));

        let cert = BranchCert::Dichotomy { var: VarId::new("x"), k: Int::from(3) };
        let mut children = branch_children(&cert);
        children[1] = vec![c("x >= 5")];
        let err = k.apply(&Step::Branch { target: ids[0], children, cert }).unwrap_err();
        assert_eq!(err, RuleViolation::ChildrenMismatch);
    }

    #[test]
    fn retire_requires_matching_lower_bound() {
        let i = inst(&["2*x + 3*y >= 12"], &[("x", 0, 10), ("y", 0, 10)], "x + y");
        let mut k = Kernel::new(&i, Budgets::default());
        let a = Assignment::from_pairs([("x", Int::from(0)), ("y", Int::from(4))]);
        let token = EufTheory.endorse(&i.atoms, &arrangement(&i, &a).unwrap());
        let sub = i.starting_subproblem();
        let (out, _) = crate::lp::lp_solve(&sub, &i.objective, &i.bounds);
        let lb_match = crate::lp::lower_bound(&out);
        assert_eq!(lb_match.bound, ObjValue::Finite(4.into()));

        let mut weak = lb_match.clone();
        weak.bound = ObjValue::Finite(3.into());
        let err = k
            .apply(&Step::Retire {
                target: SubproblemId(0),
                evidence: RetireEvidence { assignment: a.clone(), lb_match: weak, token: token.clone() },
            })
            .unwrap_err();
        assert_eq!(err.name(), "lb-mismatch");

        k.apply(&Step::Retire {
            target: SubproblemId(0),
            evidence: RetireEvidence { assignment: a.clone(), lb_match, token },
        })
        .unwrap();
        assert!(k.state().is_final());
        assert_eq!(k.state().incumbent, Incumbent::Feasible(a));
    }

    #[test]
    fn conflict_split_partitions_points() {
        let core = vec![
            TheoryLiteral::var_eq(VarId::new("a"), VarId::new("b")),
            TheoryLiteral::var_diseq(VarId::new("c"), VarId::new("d")),
        ];
        let children = conflict_split_children(&core);
        assert_eq!(children.len(), 5);
        assert_eq!(children.iter().filter(|(_, leaf)| *leaf).count(), 2);
        let names = ["a", "b", "c", "d"];
        for p in 0..(4i64.pow(4)) {
            let vals: Vec<i64> = (0..4).map(|i| (p / 4i64.pow(i)) % 4 - 1).collect();
            let asg = Assignment::from_pairs(names.iter().zip(&vals).map(|(n, v)| (*n, Int::from(*v))));
            let hits = children
                .iter()
                .filter(|(cs, _)| cs.iter().all(|c| c.satisfies(&asg).unwrap()))
                .count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn learn_run_budget_is_enforced() {
        let i = inst(&["2*x >= 1", "2*y >= 1"], &[("x", 0, 4), ("y", 0, 4)], "");
        let mut k = Kernel::new(&i, Budgets { max_branches: None, max_learn_run: Some(1) });
        let learn = |row: &str, cut: &str| {
            let mut comb = Combination::new();
            comb.push(c(row), rat(1, 2));
            Step::Learn { target: SubproblemId(0), constraint: c(cut), proof: CgProof::single(comb) }
        };
        k.apply(&learn("2*x >= 1", "x >= 1")).unwrap();
        let err = k.apply(&learn("2*y >= 1", "y >= 1")).unwrap_err();
        assert_eq!(err, RuleViolation::LearnRunBudget(1));
        assert_eq!(k.counters().longest_learn_run, 1);
    }

    #[test]
    fn subsume_removes_the_stronger_subproblem() {
        let i = inst(&["x >= 0"], &[("x", 0, 4)], "");
        let mut k = Kernel::new(&i, Budgets::default());
        let cert = BranchCert::Dichotomy { var: VarId::new("x"), k: Int::from(1) };
        let ids: Vec<SubproblemId> = k
            .apply(&Step::Branch { target: SubproblemId(0), children: branch_children(&cert), cert })
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        let err = k.apply(&Step::Subsume { target: ids[0], by: ids[1] }).unwrap_err();
        assert_eq!(err.name(), "not-subsumed");
    }
}
