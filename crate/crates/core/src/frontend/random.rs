//! Seeded generators for test instances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

use crate::model::{ImtInstance, InterfaceAtom, LinConstraint, LinExpr, Relation, VarBounds, VarId};
use crate::num::Int;

#[derive(Clone, Debug)]
pub struct RandomParams {
    pub max_vars: usize,
    pub bound: i64,
    pub max_constraints: usize,
    pub max_coeff: i64,
    pub max_funs: usize,
    pub max_atoms: usize,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams { max_vars: 4, bound: 5, max_constraints: 6, max_coeff: 3, max_funs: 2, max_atoms: 3 }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn nonzero(r: &mut impl Rng, m: i64) -> i64 {
    let k = r.gen_range(1..=m);
    if r.gen_bool(0.5) {
        k
    } else {
        -k
    }
}

/// A bounded instance over `x0..`, with unary function atoms among its
/// variables and a random objective.
pub fn random_instance(seed: u64, p: &RandomParams) -> ImtInstance {
    let mut r = rng(seed);
    let mut inst = ImtInstance::new();
    let n = r.gen_range(2..=p.max_vars.max(2));
    let vars: Vec<VarId> = (0..n)
        .map(|i| inst.add_var(format!("x{i}").as_str(), VarBounds::closed(-p.bound, p.bound)))
        .collect();
    for _ in 0..r.gen_range(1..=p.max_constraints.max(1)) {
        let mut e = LinExpr::new();
        let width = r.gen_range(1..=n.min(3));
        for v in vars.choose_multiple(&mut r, width) {
            e.add_term(v.clone(), Int::from(nonzero(&mut r, p.max_coeff)));
        }
        let rel = *[Relation::Le, Relation::Ge, Relation::Le, Relation::Ge, Relation::Eq, Relation::Lt]
            .choose(&mut r)
            .unwrap();
        let rhs = r.gen_range(-2 * p.bound..=2 * p.bound);
        inst.add_constraint(LinConstraint::new(e, rel, rhs));
    }
    let funs = r.gen_range(0..=p.max_funs);
    for i in 0..funs {
        inst.add_fun(["f", "g", "h"][i % 3], 1);
    }
    if funs > 0 {
        for _ in 0..r.gen_range(1..=p.max_atoms.max(1)) {
            let f = ["f", "g", "h"][r.gen_range(0..funs) % 3];
            let pair: Vec<&VarId> = vars.choose_multiple(&mut r, 2).collect();
            inst.add_atom(InterfaceAtom::fun_def(pair[0].clone(), f, vec![pair[1].clone()]));
        }
    }
    let mut obj = LinExpr::new();
    for v in &vars {
        let c = r.gen_range(-p.max_coeff..=p.max_coeff);
        if c != 0 {
            obj.add_term(v.clone(), Int::from(c));
        }
    }
    inst.objective = obj;
    inst
}

/// A 3-CNF over `nvars` variables; literal `k > 0` is variable `k - 1`,
/// `k < 0` its negation.
pub fn random_3cnf(seed: u64, nvars: usize, nclauses: usize) -> Vec<[i32; 3]> {
    let mut r = rng(seed);
    let ids: Vec<i32> = (1..=nvars as i32).collect();
    (0..nclauses)
        .map(|_| {
            let vs: Vec<i32> = ids.choose_multiple(&mut r, 3.min(nvars)).copied().collect();
            let mut c = [0; 3];
            for (i, slot) in c.iter_mut().enumerate() {
                let v = vs[i % vs.len()];
                *slot = if r.gen_bool(0.5) { v } else { -v };
            }
            c
        })
        .collect()
}

/// Renders a CNF as an SMT-LIB script over Boolean constants `p0..`.
pub fn cnf_to_smtlib(clauses: &[[i32; 3]], nvars: usize) -> String {
    let mut s = String::from("(set-logic QF_LIA)\n");
    for i in 0..nvars {
        let _ = writeln!(s, "(declare-const p{i} Bool)");
    }
    for c in clauses {
        s.push_str("(assert (or");
        for &l in c {
            let name = format!("p{}", l.unsigned_abs() - 1);
            if l > 0 {
                let _ = write!(s, " {name}");
            } else {
                let _ = write!(s, " (not {name})");
            }
        }
        s.push_str("))\n");
    }
    s.push_str("(check-sat)\n");
    s
}

/// Truth-table satisfiability of a CNF.
pub fn cnf_satisfiable(clauses: &[[i32; 3]], nvars: usize) -> bool {
    (0u32..1 << nvars).any(|bits| {
        clauses.iter().all(|c| {
            c.iter().any(|&l| {
                let val = bits >> (l.unsigned_abs() - 1) & 1 == 1;
                val == (l > 0)
            })
        })
    })
}
