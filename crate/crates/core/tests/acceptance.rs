//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use imt_core::cert::Combination;
use imt_core::engine::kernel_budgets;
use imt_core::euf::{conflict_core, functional_consistency};
use imt_core::frontend::random::{cnf_satisfiable, cnf_to_smtlib, random_3cnf, random_instance, rng, RandomParams};
use imt_core::frontend::{abstract_variables, brute_force_solve, encode_atom_indicator, parse_smtlib};
use imt_core::kernel::{replay_trace, BranchCert, DropCert, Kernel, RejectReason, ReplayVerdict, Step, Trace};
use imt_core::lp::{lp_solve, LpOutcome};
use imt_core::model::{AtomKind, Bounds, LinConstraint, LinExpr, ObjValue, Relation, Subproblem, SubproblemId, VarBounds};
use imt_core::theory::TheoryLiteral;
use imt_core::{solve, Assignment, Config, ImtInstance, Int, Rat, SolveStatus, VarId};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Shared results of the random-instance runs.
struct Run {
    inst: ImtInstance,
    status: SolveStatus,
    trace: Trace,
    cfg: Config,
    longest_learn_run: u64,
    branches: u64,
}

fn unlimited(trace: bool) -> Config {
    Config { node_budget: None, time_budget: None, emit_trace: trace, ..Config::default() }
}

fn same_answer(a: &SolveStatus, b: &SolveStatus) -> bool {
    match (a, b) {
        (SolveStatus::Infeasible, SolveStatus::Infeasible) => true,
        (SolveStatus::Optimal { value: x, .. }, SolveStatus::Optimal { value: y, .. }) => x == y,
        _ => false,
    }
}

// ---------------------------------------------------------------- criterion 1

fn example_fidelity() -> Outcome {
    let started = Instant::now();
    let text = "(declare-fun x () Int)(declare-fun y () Int)(declare-fun f (Int) Int)\
                (assert (and (<= 0 x 5) (<= 0 y 5)))\
                (assert (>= (+ (f (+ x 1)) (f (+ y 2))) 3))(check-sat)";
    let problem = match parse_smtlib(text) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("parse: {e}")),
    };
    let abs = match abstract_variables(&problem, Some(&Int::from(5))) {
        Ok(a) => a,
        Err(e) => return outcome(false, format!("encode: {e}")),
    };
    let inst = &abs.instance;
    let fresh = inst.vars.len() - abs.source_vars.len();
    let mut args = Vec::new();
    let mut results = Vec::new();
    for a in &inst.atoms {
        if let AtomKind::FunDef { result, args: xs, .. } = &a.kind {
            results.push(result.clone());
            args.push(xs[0].clone());
        }
    }
    let shape = fresh == 4 && inst.constraints.len() == 3 && args.len() == 2 && inst.atoms.len() == 2;
    let sat = match solve(inst, &Config::default()) {
        Ok(r) => match r.status {
            SolveStatus::Optimal { assignment, .. } => functional_consistency(inst, &assignment).unwrap_or(false),
            _ => false,
        },
        Err(_) => false,
    };
    let lits = [
        TheoryLiteral::var_eq(args[0].clone(), args[1].clone()),
        TheoryLiteral::var_diseq(results[0].clone(), results[1].clone()),
    ];
    let core_ok = match conflict_core(&inst.atoms, &lits) {
        Some(core) => !core.is_empty() && core.iter().all(|l| lits.contains(l)),
        None => false,
    };
    let fast = started.elapsed() < Duration::from_secs(1);
    outcome(
        shape && sat && core_ok && fast,
        format!(
            "{fresh} fresh vars, separate form {shape}, sat with consistent model {sat}, core within {{v1=v2, v3!=v4}} {core_ok}, {:?}",
            started.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn oracle_equivalence(runs: &mut Vec<Run>) -> Outcome {
    let started = Instant::now();
    let params = RandomParams::default();
    let mut mismatches = Vec::new();
    let mut with_atoms = 0;
    let (mut optimal, mut infeasible) = (0, 0);
    for seed in 0..200u64 {
        let inst = random_instance(seed, &params);
        if !inst.atoms.is_empty() {
            with_atoms += 1;
        }
        let cfg = unlimited(true);
        let result = match solve(&inst, &cfg) {
            Ok(r) => r,
            Err(e) => {
                mismatches.push(format!("seed {seed}: solver error {e}"));
                continue;
            }
        };
        let oracle = brute_force_solve(&inst, &inst.bounds).expect("small box");
        if !same_answer(&result.status, &oracle) {
            mismatches.push(format!("seed {seed}: solver {:?} oracle {:?}", result.status, oracle));
        }
        match oracle {
            SolveStatus::Optimal { .. } => optimal += 1,
            _ => infeasible += 1,
        }
        runs.push(Run {
            inst,
            status: result.status,
            trace: result.trace.expect("trace requested"),
            cfg,
            longest_learn_run: result.counters.longest_learn_run,
            branches: result.counters.branches,
        });
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "200 instances ({optimal} optimal, {infeasible} infeasible, {with_atoms} with atoms), {} mismatches, {elapsed:?}{}",
        mismatches.len(),
        mismatches.first().map(|m| format!("; first: {m}")).unwrap_or_default()
    );
    outcome(mismatches.is_empty() && elapsed < Duration::from_secs(300), detail)
}

// ---------------------------------------------------------------- criterion 3

/// A corrupted copy of `step`, or `None` when the step carries nothing to corrupt.
fn mutate(step: &Step, salt: u64) -> Option<(Step, &'static str)> {
    let mut s = step.clone();
    let kind = match &mut s {
        Step::Branch { children, cert, .. } => {
            if salt % 2 == 0 {
                children.pop();
                "branch: drop a child"
            } else {
                match cert {
                    BranchCert::Dichotomy { k, .. } => *k += Int::one(),
                    BranchCert::Trichotomy { c, .. } => *c += Int::one(),
                    BranchCert::ConflictSplit { core } => {
                        core.clear();
                    }
                }
                "branch: alter certificate"
            }
        }
        Step::Learn { constraint, .. } | Step::Forget { constraint, .. } => {
            let big = Int::from(1000);
            constraint.rhs = match constraint.rel {
                Relation::Le | Relation::Lt => &constraint.rhs - big,
                _ => &constraint.rhs + big,
            };
            "learn: strengthen constraint"
        }
        Step::Propagate { proof, .. } => {
            proof.lower.steps.clear();
            "propagate: erase proof"
        }
        Step::Drop { cert, .. } => {
            match cert {
                DropCert::Farkas { combination } => *combination = Combination::new(),
                DropCert::Cg { proof } => proof.steps.clear(),
            }
            "drop: erase certificate"
        }
        Step::Prune { lb, .. } => {
            lb.bound = ObjValue::NegInf;
            "prune: weaken bound"
        }
        Step::Retire { evidence, .. } => {
            if salt % 2 == 0 {
                evidence.token.digest = "0".repeat(64);
                "retire: forge token"
            } else {
                let (v, x) = evidence.assignment.iter().next().map(|(v, x)| (v.clone(), x.clone()))?;
                evidence.assignment.set(v, x + Int::from(100));
                "retire: move model out of bounds"
            }
        }
        Step::Unbounded { evidence, .. } => {
            evidence.ray = Assignment::new();
            "unbounded: zero ray"
        }
        Step::TLearn { lemma, .. } => {
            lemma.token.digest = "0".repeat(64);
            "tlearn: forge token"
        }
        Step::Subsume { by, .. } => {
            *by = SubproblemId(u64::MAX);
            "subsume: unknown subsumer"
        }
    };
    Some((s, kind))
}

fn trace_soundness(runs: &[Run]) -> Outcome {
    let mut rejected = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        match replay_trace(&r.inst, &r.trace, kernel_budgets(&r.cfg)) {
            Ok(v) if v.is_accepted() => {}
            other => rejected.push(format!("instance {i}: {other:?}")),
        }
    }
    // sample step positions evenly across rules
    let mut by_rule: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, run) in runs.iter().enumerate() {
        for (j, s) in run.trace.steps.iter().enumerate() {
            by_rule.entry(format!("{:?}", s.rule())).or_default().push((i, j));
        }
    }
    let rules: Vec<&Vec<(usize, usize)>> = by_rule.values().collect();
    let mut r = rng(2024);
    let mut tried = 0;
    let mut caught = 0;
    let mut names: BTreeMap<String, u64> = BTreeMap::new();
    let mut kinds: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut escapes = Vec::new();
    let mut attempts = 0;
    while tried < 120 && attempts < 10_000 {
        let pool = rules[attempts % rules.len()];
        attempts += 1;
        let (i, index) = pool[r.gen_range(0..pool.len())];
        let run = &runs[i];
        let Some((step, kind)) = mutate(&run.trace.steps[index], r.gen()) else { continue };
        let mut t = run.trace.clone();
        t.steps[index] = step;
        tried += 1;
        *kinds.entry(kind).or_default() += 1;
        match replay_trace(&run.inst, &t, kernel_budgets(&run.cfg)) {
            Ok(ReplayVerdict::Rejected { index: at, reason: RejectReason::Violation(v) }) if at == index => {
                caught += 1;
                *names.entry(v.name().to_string()).or_default() += 1;
            }
            other => escapes.push(format!("{kind} at step {index}: {other:?}")),
        }
    }
    let detail = format!(
        "{} traces replayed, {} rejected; {caught}/{tried} mutations rejected at the mutated step; kinds {:?}; violations {:?}{}",
        runs.len(),
        rejected.len(),
        kinds,
        names,
        escapes.first().map(|e| format!("; first escape: {e}")).unwrap_or_default()
    );
    outcome(rejected.is_empty() && tried >= 50 && caught == tried, detail)
}

// ---------------------------------------------------------------- criterion 4

/// Integer rows over a fixed variable order.
struct IntRows {
    rows: Vec<(Vec<(usize, i64)>, i64)>,
}

impl IntRows {
    fn new(cs: &[LinConstraint], index: &BTreeMap<VarId, usize>) -> IntRows {
        let mut rows = Vec::new();
        for c in cs {
            for (e, r) in c.ge_forms() {
                rows.push((e.iter().map(|(v, k)| (index[v], k.to_i64().unwrap())).collect(), r.to_i64().unwrap()));
            }
        }
        IntRows { rows }
    }

    fn holds(&self, p: &[i64]) -> bool {
        self.rows.iter().all(|(t, r)| t.iter().map(|&(i, k)| k * p[i]).sum::<i64>() >= *r)
    }
}

fn box_points(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    let mut p = lo.to_vec();
    loop {
        f(&p);
        let mut i = 0;
        loop {
            if i == p.len() {
                return;
            }
            if p[i] < hi[i] {
                p[i] += 1;
                break;
            }
            p[i] = lo[i];
            i += 1;
        }
    }
}

fn cut_validity(runs: &[Run]) -> Outcome {
    let mut cuts = 0u64;
    let mut violations = Vec::new();
    for (n, run) in runs.iter().enumerate() {
        let inst = &run.inst;
        let index: BTreeMap<VarId, usize> = inst.vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
        let lo: Vec<i64> = inst.vars.iter().map(|v| inst.bounds.get(v).lo.unwrap().to_i64().unwrap()).collect();
        let hi: Vec<i64> = inst.vars.iter().map(|v| inst.bounds.get(v).hi.unwrap().to_i64().unwrap()).collect();
        let mut kernel = Kernel::new(inst, kernel_budgets(&run.cfg));
        for step in &run.trace.steps {
            if let Step::Learn { target, constraint, .. } = step {
                cuts += 1;
                let parent = IntRows::new(&kernel.subproblem(*target).expect("live").rows(), &index);
                let cut = IntRows::new(std::slice::from_ref(constraint), &index);
                let mut bad = None;
                box_points(&lo, &hi, |p| {
                    if bad.is_none() && parent.holds(p) && !cut.holds(p) {
                        bad = Some(p.to_vec());
                    }
                });
                if let Some(p) = bad {
                    violations.push(format!("instance {n}: cut {constraint} excludes {p:?}"));
                }
            }
            kernel.apply(step).expect("accepted trace");
        }
    }
    outcome(
        violations.is_empty() && cuts > 0,
        format!(
            "{cuts} cuts checked against every integer point of their parent, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn big_m_linking() -> Outcome {
    let mut r = rng(55);
    let names = ["x", "y", "z"];
    let mut violations = 0u64;
    let mut points = 0u64;
    let atoms = 150;
    for _ in 0..atoms {
        let n = r.gen_range(1..=3);
        let mut bounds = Bounds::new();
        let mut e = LinExpr::new();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        let mut volume = 1i64;
        for name in &names[..n] {
            let max_width = (10_000 / volume).min(40);
            let width = r.gen_range(0..max_width.max(1));
            let l = r.gen_range(-20..=20);
            volume *= width + 1;
            bounds.set(VarId::new(name), VarBounds::closed(l, l + width));
            lo.push(l);
            hi.push(l + width);
            let mut c = 0;
            while c == 0 {
                c = r.gen_range(-5..=5);
            }
            e.add_term(VarId::new(name), Int::from(c));
        }
        let rhs = r.gen_range(-60..=60);
        let v = VarId::new("v");
        let rows = encode_atom_indicator(&e, &Int::from(rhs), &v, &bounds).expect("bounded");
        let mut index: BTreeMap<VarId, usize> = names[..n].iter().enumerate().map(|(i, s)| (VarId::new(s), i)).collect();
        index.insert(v.clone(), n);
        let enc = IntRows::new(&rows, &index);
        let atom = IntRows::new(&[LinConstraint::new(e.clone(), Relation::Le, rhs)], &index);
        lo.push(0);
        hi.push(1);
        box_points(&lo, &hi, |p| {
            points += 1;
            let linked = enc.holds(p);
            let expected = (p[n] == 1) == atom.holds(p);
            if linked != expected {
                violations += 1;
            }
        });
    }
    outcome(violations == 0, format!("{atoms} atoms, {points} box points, {violations} violations"))
}

// ---------------------------------------------------------------- criterion 6

fn clause_encoding() -> Outcome {
    let mut r = rng(66);
    let mut mismatches = Vec::new();
    let (mut sat, mut unsat) = (0, 0);
    let formulas = 120;
    for i in 0..formulas {
        let nvars = r.gen_range(3..=12);
        let nclauses = r.gen_range(3 * nvars..=6 * nvars);
        let cnf = random_3cnf(1000 + i, nvars, nclauses);
        let truth = cnf_satisfiable(&cnf, nvars);
        let problem = parse_smtlib(&cnf_to_smtlib(&cnf, nvars)).expect("generated script parses");
        let inst = abstract_variables(&problem, None).expect("booleans are bounded").instance;
        let got = match solve(&inst, &unlimited(false)).map(|r| r.status) {
            Ok(SolveStatus::Optimal { .. }) => Some(true),
            Ok(SolveStatus::Infeasible) => Some(false),
            _ => None,
        };
        if got != Some(truth) {
            mismatches.push(format!("formula {i}: truth table {truth}, solver {got:?}"));
        }
        if truth {
            sat += 1;
        } else {
            unsat += 1;
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{formulas} formulas ({sat} sat, {unsat} unsat), {} mismatches", mismatches.len()),
    )
}

// ---------------------------------------------------------------- criterion 7

fn termination(runs: &[Run]) -> Outcome {
    let mut unfinished = 0;
    let mut worst_run = 0;
    let mut worst_cut_rounds = 0usize;
    let mut branches = 0;
    let mut over = 0;
    for run in runs {
        if matches!(run.status, SolveStatus::BudgetExceeded { .. }) {
            unfinished += 1;
        }
        let cap = kernel_budgets(&run.cfg).max_learn_run.expect("set");
        worst_run = worst_run.max(run.longest_learn_run);
        if run.longest_learn_run > cap {
            over += 1;
        }
        branches += run.branches;
        // cut rounds per node: Learn steps on one target divided by the per-round cap
        let mut per_node: BTreeMap<SubproblemId, usize> = BTreeMap::new();
        for s in &run.trace.steps {
            if let Step::Learn { target, .. } = s {
                *per_node.entry(*target).or_default() += 1;
            }
        }
        for n in per_node.values() {
            let rounds = n.div_ceil(run.cfg.cut_cap_per_node);
            worst_cut_rounds = worst_cut_rounds.max(rounds);
            if rounds > run.cfg.cuts_rounds_max {
                over += 1;
            }
        }
    }
    outcome(
        unfinished == 0 && over == 0,
        format!(
            "{} runs without budgets all terminated: {}, {branches} branch steps in total, longest Learn-only run {worst_run}, most cut rounds at a node {worst_cut_rounds}",
            runs.len(),
            unfinished == 0
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

/// Seating: 7 seating units (three couples and four singles), 3 tables of 5
/// seats, unit 0 fixed at table 0. `a_u_k` puts unit `u` at table `k`;
/// `b_p_k` rewards pair `p` sharing table `k`.
fn fundraising() -> ImtInstance {
    let sizes = [2, 2, 2, 1, 1, 1, 1];
    let tables = 3;
    let separated = [(0, 4), (1, 3), (2, 4), (5, 6)];
    // officials are units 3 and 4; weights favour sitting with donors
    let adjacency = [(3, 0, 3), (3, 2, 2), (4, 1, 2), (4, 5, 1), (3, 6, 1)];
    let a = |u: usize, k: usize| VarId::new(&format!("a_{u}_{k}"));
    let mut inst = ImtInstance::new();
    for u in 0..sizes.len() {
        for k in 0..tables {
            let fixed = if u == 0 { Some(if k == 0 { 1 } else { 0 }) } else { None };
            let b = match fixed {
                Some(x) => VarBounds::closed(x, x),
                None => VarBounds::closed(0, 1),
            };
            inst.add_var(a(u, k), b);
        }
        let e = LinExpr::from_terms((0..tables).map(|k| (a(u, k), Int::one())));
        inst.add_constraint(LinConstraint::new(e, Relation::Eq, 1));
    }
    for k in 0..tables {
        let e = LinExpr::from_terms(sizes.iter().enumerate().map(|(u, s)| (a(u, k), Int::from(*s))));
        inst.add_constraint(LinConstraint::new(e, Relation::Le, 5));
        for (x, y) in separated {
            inst.add_constraint(LinConstraint::new(
                LinExpr::from_terms([(a(x, k), Int::one()), (a(y, k), Int::one())]),
                Relation::Le,
                1,
            ));
        }
    }
    let mut obj = LinExpr::new();
    for (p, (x, y, w)) in adjacency.iter().enumerate() {
        for k in 0..tables {
            let b = inst.add_var(format!("b_{p}_{k}").as_str(), VarBounds::closed(0, 1));
            for u in [*x, *y] {
                inst.add_constraint(LinConstraint::new(
                    LinExpr::from_terms([(b.clone(), Int::one()), (a(u, k), -Int::one())]),
                    Relation::Le,
                    0,
                ));
            }
            obj.add_term(b, Int::from(-w));
        }
    }
    inst.objective = obj;
    inst
}

fn fundraising_check() -> Outcome {
    let inst = fundraising();
    let started = Instant::now();
    let solved = solve(&inst, &unlimited(true));
    let elapsed = started.elapsed();
    let oracle = brute_force_solve(&inst, &inst.bounds);
    match (solved, oracle) {
        (Ok(r), Ok(o)) => {
            let agree = same_answer(&r.status, &o);
            let value = match &r.status {
                SolveStatus::Optimal { value, .. } => format!("optimum {}", -value),
                other => format!("{other:?}"),
            };
            outcome(
                agree && elapsed < Duration::from_secs(60),
                format!(
                    "{} vars, {} rows; solver {value} (agrees with enumeration: {agree}) in {elapsed:?}, {} nodes",
                    inst.vars.len(),
                    inst.constraints.len(),
                    r.stats.nodes
                ),
            )
        }
        (s, o) => outcome(false, format!("solver {:?} / oracle {:?}", s.map(|r| r.status), o)),
    }
}

// ---------------------------------------------------------------- criterion 9

/// Solves a square system exactly; `None` when singular.
fn solve_square(mut m: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                for c in col..n {
                    let d = &f * &m[col][c];
                    m[r][c] -= d;
                }
                let d = &f * &b[col];
                b[r] -= d;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &m[i][i]).collect())
}

fn vertex_minimum(rows: &[LinConstraint], vars: &[VarId], obj: &LinExpr) -> Option<Rat> {
    let forms: Vec<(LinExpr, Int)> = rows.iter().flat_map(|c| c.ge_forms()).collect();
    let n = vars.len();
    let mut best: Option<Rat> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let m = pick.iter().map(|&i| vars.iter().map(|v| Rat::from(forms[i].0.coeff(v))).collect()).collect();
        let b = pick.iter().map(|&i| Rat::from(forms[i].1.clone())).collect();
        if let Some(x) = solve_square(m, b) {
            let point: BTreeMap<VarId, Rat> = vars.iter().cloned().zip(x).collect();
            if rows.iter().all(|c| c.holds_at(&point)) {
                let v = obj.eval_rat(&point);
                if best.as_ref().map_or(true, |b| &v < b) {
                    best = Some(v);
                }
            }
        }
        // next n-subset
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < forms.len() - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn lp_exactness() -> Outcome {
    let mut r = rng(99);
    let names = ["x", "y", "z"];
    let (mut optimal, mut infeasible, mut failures) = (0, 0, Vec::new());
    let total = 150;
    for i in 0..total {
        let n = r.gen_range(1..=3);
        let vars: Vec<VarId> = names[..n].iter().map(|s| VarId::new(s)).collect();
        let mut bounds = Bounds::new();
        for v in &vars {
            let lo = r.gen_range(-6..=0);
            bounds.set(v.clone(), VarBounds::closed(lo, lo + r.gen_range(1..=8)));
        }
        // most systems keep a random anchor point feasible
        let anchor: Vec<i64> = vars
            .iter()
            .map(|v| {
                let b = bounds.get(v);
                r.gen_range(b.lo.unwrap().to_i64().unwrap()..=b.hi.unwrap().to_i64().unwrap())
            })
            .collect();
        let keep_anchor = r.gen_bool(0.7);
        let mut cs = Vec::new();
        for _ in 0..r.gen_range(1..=5) {
            let coeffs: Vec<i64> = vars.iter().map(|_| r.gen_range(-4..=4)).collect();
            let e = LinExpr::from_terms(vars.iter().cloned().zip(coeffs.iter().map(|&c| Int::from(c))));
            if e.is_empty() {
                continue;
            }
            let at: i64 = coeffs.iter().zip(&anchor).map(|(c, x)| c * x).sum();
            let rel = [Relation::Le, Relation::Ge, Relation::Le, Relation::Ge, Relation::Eq][r.gen_range(0..5)];
            let rhs = if keep_anchor {
                match rel {
                    Relation::Le => at + r.gen_range(0..=3),
                    Relation::Ge => at - r.gen_range(0..=3),
                    _ => at,
                }
            } else {
                r.gen_range(-8..=8)
            };
            cs.push(LinConstraint::new(e, rel, rhs));
        }
        let obj = LinExpr::from_terms(vars.iter().map(|v| (v.clone(), Int::from(r.gen_range(-5..=5)))));
        let sub = Subproblem::new(SubproblemId(0), cs.iter().cloned(), []);
        let (out, _) = lp_solve(&sub, &obj, &bounds);
        let mut all = cs.clone();
        all.extend(bounds.as_constraints());
        let expected = vertex_minimum(&all, &vars, &obj);
        let available = |c: &LinConstraint| all.iter().any(|a| a.normalize() == c.normalize());
        let ok = match (&out, &expected) {
            (LpOutcome::Optimal { point, value, dual }, Some(v)) => {
                optimal += 1;
                let substituted = all.iter().all(|c| c.holds_at(point)) && &obj.eval_rat(point) == value;
                let dual_ok = dual.check_rows(&available).is_ok()
                    && match dual.combine() {
                        Ok((e, rhs)) => {
                            let target: BTreeMap<VarId, Rat> = obj.iter().map(|(v, c)| (v.clone(), Rat::from(c.clone()))).collect();
                            e == target && &rhs == value
                        }
                        Err(_) => false,
                    };
                value == v && substituted && dual_ok
            }
            (LpOutcome::Infeasible { farkas }, None) => {
                infeasible += 1;
                farkas.check_rows(&available).is_ok()
                    && matches!(farkas.combine(), Ok((e, rhs)) if e.is_empty() && rhs.is_positive())
            }
            _ => false,
        };
        if !ok {
            failures.push(format!("lp {i}: {out:?} vs vertex value {expected:?}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{total} LPs ({optimal} optimal, {infeasible} infeasible), {} failures{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn main() {
    let mut runs = Vec::new();
    let mut report: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut timed = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report.push((name, o, t.elapsed()));
        let (name, o, d) = report.last().unwrap();
        println!("{} criterion {name}: {} [{d:.2?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    timed("1 (worked example)", &mut example_fidelity);
    timed("2 (oracle equivalence)", &mut || oracle_equivalence(&mut runs));
    timed("3 (trace soundness)", &mut || trace_soundness(&runs));
    timed("4 (cut validity)", &mut || cut_validity(&runs));
    timed("5 (big-M linking)", &mut big_m_linking);
    timed("6 (clause encoding)", &mut clause_encoding);
    timed("7 (termination)", &mut || termination(&runs));
    timed("8 (fundraising)", &mut fundraising_check);
    timed("9 (LP exactness)", &mut lp_exactness);
    let failed = report.iter().filter(|(_, o, _)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", report.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
