//! Branch-and-cut search over kernel steps.
//!
//! The engine never changes a state on its own: each decision is phrased as a
//! [`Step`] and handed to the [`Kernel`], which checks it.

use num_traits::{One, Signed, Zero};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};
use thiserror::Error;

use crate::cert::Combination;
use crate::euf::{arrangement, functional_consistency};
use crate::kernel::{
    branch_children, conflict_split_children, replay_trace, BranchCert, Budgets, Counters,
    DropCert, Kernel, RetireEvidence, RuleViolation, Step, TLemma, Trace, UnboundedEvidence,
};
use crate::lp::{derive_gomory_cuts, lower_bound, lp_solve, propagate_bounds, LpOutcome, Propagation};
use crate::model::{
    Assignment, ImtInstance, Incumbent, LinConstraint, ModelError, ObjValue, SubproblemId, VarBounds,
    VarId,
};
use crate::num::{ceil, floor, frac, is_integral, lcm_of_denominators, Int, Rat};
use crate::theory::{Theory, TheoryLiteral, TheoryResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchRule {
    MostFractional,
    LowestIndex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeOrder {
    BestBound,
    DepthFirst,
}

#[derive(Clone, Debug)]
pub struct Config {
    /// Maximum number of processed nodes; `None` runs to completion.
    pub node_budget: Option<u64>,
    pub cut_cap_per_node: usize,
    pub cuts_rounds_max: usize,
    pub branch_rule: BranchRule,
    pub node_order: NodeOrder,
    /// Bounds `[-n, n]` for every variable lacking a lower or upper bound.
    pub default_bound: Option<Int>,
    pub time_budget: Option<Duration>,
    pub emit_trace: bool,
    pub propagation_sweeps: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            node_budget: Some(100_000),
            cut_cap_per_node: 4,
            cuts_rounds_max: 2,
            branch_rule: BranchRule::MostFractional,
            node_order: NodeOrder::BestBound,
            default_bound: None,
            time_budget: None,
            emit_trace: false,
            propagation_sweeps: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal { assignment: Assignment, value: Int },
    Infeasible,
    Unbounded { witness: Assignment },
    BudgetExceeded { best: Incumbent },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub nodes: u64,
    pub lp_solves: u64,
    pub cuts: u64,
    pub branches: u64,
    pub propagations: u64,
    pub theory_conflicts: u64,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub stats: Stats,
    pub counters: Counters,
    pub trace: Option<Trace>,
    /// Every Learn step admitted, with the subproblem it was added to.
    pub learned: Vec<(SubproblemId, LinConstraint)>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("variable {0} is unbounded but the instance has theory atoms")]
    UnboundedVarsWithTheory(VarId),
    #[error("invalid instance: {0}")]
    Model(#[from] ModelError),
    #[error("kernel rejected an engine step: {0}")]
    Kernel(#[from] RuleViolation),
    #[error("replay of the emitted trace failed: {0}")]
    TraceRejected(String),
}

/// The instance actually searched: `default_bound` fills missing bounds.
pub fn prepare_instance(inst: &ImtInstance, default_bound: Option<&Int>) -> ImtInstance {
    let mut out = inst.clone();
    if let Some(n) = default_bound {
        for v in inst.vars.iter() {
            let b = inst.bounds.get(v);
            let lo = b.lo.clone().or_else(|| Some(-n.clone()));
            let hi = b.hi.clone().or_else(|| Some(n.clone()));
            out.bounds.set(v.clone(), VarBounds::new(lo, hi));
        }
    }
    out
}

/// Picks the branching variable among fractional coordinates.
pub fn select_branch(
    target: SubproblemId,
    point: &BTreeMap<VarId, Rat>,
    rule: BranchRule,
) -> Option<Step> {
    let half = Rat::new(Int::one(), Int::from(2));
    let mut best: Option<(&VarId, Rat)> = None;
    for (v, x) in point {
        if is_integral(x) {
            continue;
        }
        let f = frac(x);
        let dist = if f > half { Rat::one() - f } else { f };
        let better = match (&best, rule) {
            (None, _) => true,
            (Some(_), BranchRule::LowestIndex) => false,
            (Some((_, d)), BranchRule::MostFractional) => dist > *d,
        };
        if better {
            best = Some((v, dist));
        }
    }
    let (v, _) = best?;
    let cert = BranchCert::Dichotomy { var: v.clone(), k: floor(&point[v]) };
    Some(Step::Branch { target, children: branch_children(&cert), cert })
}

/// The Branch step of a conflict split and the TLearn lemma for its leaves.
/// Returns the step and, per child, whether it is a leaf to be refuted.
pub fn conflict_split(
    target: SubproblemId,
    core: &[TheoryLiteral],
    inst: &ImtInstance,
    theory: &dyn Theory,
) -> (Step, Vec<bool>, TLemma) {
    let split = conflict_split_children(core);
    let leaves = split.iter().map(|(_, leaf)| *leaf).collect();
    let children = split.into_iter().map(|(c, _)| c).collect();
    let lemma = TLemma {
        asserted: core.to_vec(),
        support: Vec::new(),
        lemma: LinConstraint::contradiction(),
        token: theory.endorse(&inst.atoms, core),
    };
    (
        Step::Branch { target, children, cert: BranchCert::ConflictSplit { core: core.to_vec() } },
        leaves,
        lemma,
    )
}

struct Search<'a> {
    inst: &'a ImtInstance,
    cfg: &'a Config,
    kernel: Kernel,
    trace: Option<Trace>,
    stats: Stats,
    learned: Vec<(SubproblemId, LinConstraint)>,
    heap: BinaryHeap<Reverse<(ObjValue, u64, SubproblemId)>>,
    stack: Vec<SubproblemId>,
    seq: u64,
}

impl<'a> Search<'a> {
    fn apply(&mut self, step: Step) -> Result<Vec<Option<SubproblemId>>, SolveError> {
        let out = self.kernel.apply(&step)?;
        self.stats.steps += 1;
        if let Step::Learn { target, constraint, .. } = &step {
            self.learned.push((*target, constraint.clone()));
        }
        if let Some(t) = &mut self.trace {
            t.steps.push(step);
        }
        if let Incumbent::Feasible(a) | Incumbent::Unbounded(a) = &self.kernel.state().incumbent {
            debug_assert!(self.inst.satisfies_linear(a).unwrap_or(false));
            debug_assert!(functional_consistency(self.inst, a).unwrap_or(false));
        }
        Ok(out)
    }

    fn push(&mut self, id: SubproblemId, lb: ObjValue) {
        self.seq += 1;
        match self.cfg.node_order {
            NodeOrder::BestBound => self.heap.push(Reverse((lb, self.seq, id))),
            NodeOrder::DepthFirst => self.stack.push(id),
        }
    }

    fn pop(&mut self) -> Option<SubproblemId> {
        match self.cfg.node_order {
            NodeOrder::BestBound => self.heap.pop().map(|Reverse((_, _, id))| id),
            NodeOrder::DepthFirst => self.stack.pop(),
        }
    }

    fn incumbent_obj(&self) -> ObjValue {
        crate::model::obj_value(&self.inst.objective, &self.kernel.state().incumbent)
            .expect("incumbent is total")
    }

    /// Completes an LP point to a total integer assignment.
    fn to_assignment(&self, point: &BTreeMap<VarId, Rat>) -> Assignment {
        let mut a = Assignment::new();
        for v in &self.inst.vars {
            let x = match point.get(v) {
                Some(x) => x.to_integer(),
                None => {
                    let b = self.inst.bounds.get(v);
                    let zero = Int::zero();
                    match (&b.lo, &b.hi) {
                        (Some(l), _) if l > &zero => l.clone(),
                        (_, Some(h)) if h < &zero => h.clone(),
                        _ => zero,
                    }
                }
            };
            a.set(v.clone(), x);
        }
        a
    }

    fn process(&mut self, id: SubproblemId) -> Result<(), SolveError> {
        let Some(sub) = self.kernel.subproblem(id).cloned() else {
            return Ok(());
        };
        match propagate_bounds(&sub, &self.inst.bounds, self.cfg.propagation_sweeps) {
            Propagation::Infeasible(proof) => {
                self.apply(Step::Drop { target: id, cert: DropCert::Cg { proof } })?;
                return Ok(());
            }
            Propagation::Implied(found) => {
                for (equality, proof) in found {
                    if self.kernel.subproblem(id).is_none() {
                        return Ok(());
                    }
                    self.stats.propagations += 1;
                    self.apply(Step::Propagate { target: id, equality, proof })?;
                }
            }
        }

        let mut rounds = 0;
        loop {
            let Some(sub) = self.kernel.subproblem(id).cloned() else {
                return Ok(());
            };
            self.stats.lp_solves += 1;
            let (out, tableau) = lp_solve(&sub, &self.inst.objective, &self.inst.bounds);
            match &out {
                LpOutcome::Infeasible { farkas } => {
                    let combination = farkas.clone();
                    self.apply(Step::Drop { target: id, cert: DropCert::Farkas { combination } })?;
                    return Ok(());
                }
                LpOutcome::Unbounded { point, ray } => {
                    if let Some(step) = select_branch(id, point, self.cfg.branch_rule) {
                        return self.branch(step, ObjValue::NegInf);
                    }
                    return self.unbounded(id, point, ray);
                }
                LpOutcome::Optimal { point, value, .. } => {
                    let lb = lower_bound(&out);
                    if self.kernel.state().incumbent != Incumbent::None && lb.bound >= self.incumbent_obj() {
                        self.apply(Step::Prune { target: id, lb })?;
                        return Ok(());
                    }
                    let fractional = point.values().any(|x| !is_integral(x));
                    if fractional {
                        if rounds < self.cfg.cuts_rounds_max && self.cfg.cut_cap_per_node > 0 {
                            let cuts = tableau
                                .as_ref()
                                .map(|t| derive_gomory_cuts(t, self.cfg.cut_cap_per_node))
                                .unwrap_or_default();
                            if !cuts.is_empty() {
                                rounds += 1;
                                for g in cuts {
                                    if self.kernel.subproblem(id).is_none() {
                                        return Ok(());
                                    }
                                    self.stats.cuts += 1;
                                    self.apply(Step::Learn { target: id, constraint: g.cut, proof: g.proof })?;
                                }
                                continue;
                            }
                        }
                        let step = select_branch(id, point, self.cfg.branch_rule).expect("fractional point");
                        return self.branch(step, ObjValue::Finite(ceil(value)));
                    }
                    let a = self.to_assignment(point);
                    let lits = arrangement(self.inst, &a)?;
                    match self.kernel.theory().check(&self.inst.atoms, &lits) {
                        TheoryResult::Sat => {
                            let token = self.kernel.theory().endorse(&self.inst.atoms, &lits);
                            self.apply(Step::Retire {
                                target: id,
                                evidence: RetireEvidence { assignment: a, lb_match: lb, token },
                            })?;
                        }
                        TheoryResult::Unsat { core } => {
                            self.stats.theory_conflicts += 1;
                            let (step, leaves, lemma) =
                                conflict_split(id, &core, self.inst, self.kernel.theory());
                            self.stats.branches += 1;
                            let ids = self.apply(step)?;
                            let parent_lb = lb.bound.clone();
                            for (child, leaf) in ids.into_iter().zip(leaves) {
                                let Some(child) = child else { continue };
                                if leaf {
                                    self.apply(Step::TLearn { target: child, lemma: lemma.clone() })?;
                                    let mut farkas = Combination::new();
                                    farkas.push(LinConstraint::contradiction().normalize(), Rat::one());
                                    self.apply(Step::Drop {
                                        target: child,
                                        cert: DropCert::Farkas { combination: farkas },
                                    })?;
                                } else {
                                    self.push(child, parent_lb.clone());
                                }
                            }
                        }
                    }
                    return Ok(());
                }
            }
        }
    }

    fn branch(&mut self, step: Step, lb: ObjValue) -> Result<(), SolveError> {
        self.stats.branches += 1;
        let ids = self.apply(step)?;
        // Push in reverse so depth-first explores the first child first.
        for id in ids.into_iter().rev().flatten() {
            self.push(id, lb.clone());
        }
        Ok(())
    }

    fn unbounded(
        &mut self,
        id: SubproblemId,
        point: &BTreeMap<VarId, Rat>,
        ray: &BTreeMap<VarId, Rat>,
    ) -> Result<(), SolveError> {
        let scale = Rat::from_integer(lcm_of_denominators(ray.values()));
        let int_ray: BTreeMap<VarId, Int> = ray.iter().map(|(v, r)| (v.clone(), (r * &scale).to_integer())).collect();
        let mut a = self.to_assignment(point);
        // Walk along the ray until the witness is no worse than the incumbent.
        let slope: Int = int_ray.iter().map(|(v, r)| self.inst.objective.coeff(v) * r).sum();
        if let ObjValue::Finite(best) = self.incumbent_obj() {
            let here = self.inst.objective.eval(&a)?;
            if here > best && slope.is_negative() {
                let t = ceil(&Rat::new(here - best, -slope));
                for (v, r) in &int_ray {
                    let x = a.get(v)? + r * &t;
                    a.set(v.clone(), x);
                }
            }
        }
        let lits = arrangement(self.inst, &a)?;
        let token = self.kernel.theory().endorse(&self.inst.atoms, &lits);
        let ray = Assignment::from_pairs(int_ray);
        self.apply(Step::Unbounded { target: id, evidence: UnboundedEvidence { assignment: a, ray, token } })?;
        Ok(())
    }
}

/// Minimizes the instance objective over its T-models.
pub fn solve(instance: &ImtInstance, cfg: &Config) -> Result<SolveResult, SolveError> {
    let inst = prepare_instance(instance, cfg.default_bound.as_ref());
    inst.validate()?;
    if !inst.atoms.is_empty() {
        if let Some(v) = inst.vars.iter().find(|v| !inst.bounds.get(v).is_finite()) {
            return Err(SolveError::UnboundedVarsWithTheory(v.clone()));
        }
    }
    let budgets = kernel_budgets(cfg);
    let mut s = Search {
        inst: &inst,
        cfg,
        kernel: Kernel::new(&inst, budgets),
        trace: cfg.emit_trace.then(|| Trace::new(&inst)),
        stats: Stats::default(),
        learned: Vec::new(),
        heap: BinaryHeap::new(),
        stack: Vec::new(),
        seq: 0,
    };
    let started = Instant::now();
    s.push(SubproblemId(0), ObjValue::NegInf);
    let mut exhausted = false;
    while let Some(id) = s.pop() {
        if s.kernel.state().is_final() {
            break;
        }
        let over_nodes = cfg.node_budget.is_some_and(|n| s.stats.nodes >= n);
        let over_time = cfg.time_budget.is_some_and(|t| started.elapsed() >= t);
        if over_nodes || over_time {
            exhausted = true;
            break;
        }
        if s.kernel.subproblem(id).is_none() {
            continue;
        }
        s.stats.nodes += 1;
        s.process(id)?;
    }

    let state = s.kernel.state();
    let status = if exhausted || !state.is_final() {
        SolveStatus::BudgetExceeded { best: state.incumbent.clone() }
    } else {
        match &state.incumbent {
            Incumbent::None => SolveStatus::Infeasible,
            Incumbent::Feasible(a) => SolveStatus::Optimal {
                value: inst.objective.eval(a)?,
                assignment: a.clone(),
            },
            Incumbent::Unbounded(a) => SolveStatus::Unbounded { witness: a.clone() },
        }
    };
    if let (Some(trace), false) = (&s.trace, matches!(status, SolveStatus::BudgetExceeded { .. })) {
        let verdict = replay_trace(&inst, trace, budgets).map_err(|e| SolveError::TraceRejected(e.to_string()))?;
        if !verdict.is_accepted() {
            return Err(SolveError::TraceRejected(format!("{verdict:?}")));
        }
    }
    Ok(SolveResult {
        status,
        stats: s.stats,
        counters: s.kernel.counters().clone(),
        trace: s.trace,
        learned: s.learned,
    })
}

/// Kernel budgets implied by the configuration: cut rounds bound every run of
/// Learn/TLearn steps.
pub fn kernel_budgets(cfg: &Config) -> Budgets {
    let run = (cfg.cuts_rounds_max * cfg.cut_cap_per_node) as u64 + 1;
    Budgets { max_branches: None, max_learn_run: Some(run) }
}
