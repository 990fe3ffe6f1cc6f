//! Congruence closure over integer-valued terms.
//!
//! Nodes are variables and function applications. The union-find stores an
//! offset per node (`value(n) = value(root) + offset`), so literals such as
//! `x = y + 2` are handled alongside plain equalities. Two applications of the
//! same function are congruent when their arguments have equal values.

use indexmap::IndexMap;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::model::{Assignment, AtomKind, ImtInstance, InterfaceAtom, ModelError, VarId};
use crate::num::Int;
use crate::theory::{Theory, TheoryLiteral, TheoryResult};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Term {
    Var(VarId),
    App(Arc<str>, Vec<usize>),
}

#[derive(Clone, Debug, Default)]
struct State {
    parent: Vec<usize>,
    offset: Vec<Int>,
    diseqs: Vec<(usize, usize, Int)>,
    conflict: bool,
}

/// An incremental EUF session over a fixed set of atoms.
#[derive(Clone, Debug)]
pub struct Session {
    terms: IndexMap<Term, ()>,
    /// Annotation variable -> atoms it annotates.
    annotated: HashMap<VarId, Vec<InterfaceAtom>>,
    state: State,
    saved: Vec<State>,
}

impl Session {
    /// Registers the atoms; unannotated atoms are asserted as base facts.
    pub fn new(atoms: &[InterfaceAtom]) -> Self {
        let mut s = Session {
            terms: IndexMap::new(),
            annotated: HashMap::new(),
            state: State::default(),
            saved: Vec::new(),
        };
        for a in atoms {
            for v in a.term_vars() {
                s.var_node(v);
            }
            if let AtomKind::FunDef { fun, args, .. } = &a.kind {
                s.app_node(fun, args);
            }
            match &a.annotation {
                Some(v) => s.annotated.entry(v.clone()).or_default().push(a.clone()),
                None => {
                    let (l, r) = s.atom_sides(a);
                    s.merge(l, r, Int::from(0));
                }
            }
        }
        s
    }

    fn node(&mut self, t: Term) -> usize {
        if let Some(i) = self.terms.get_index_of(&t) {
            return i;
        }
        let (i, _) = self.terms.insert_full(t, ());
        self.state.parent.push(i);
        self.state.offset.push(Int::from(0));
        i
    }

    fn var_node(&mut self, v: &VarId) -> usize {
        self.node(Term::Var(v.clone()))
    }

    fn app_node(&mut self, fun: &Arc<str>, args: &[VarId]) -> usize {
        let args: Vec<usize> = args.iter().map(|a| self.var_node(a)).collect();
        self.node(Term::App(fun.clone(), args))
    }

    fn atom_sides(&mut self, a: &InterfaceAtom) -> (usize, usize) {
        match &a.kind {
            AtomKind::FunDef { result, fun, args } => {
                let r = self.var_node(result);
                (r, self.app_node(fun, args))
            }
            AtomKind::EqAtom { left, right } => (self.var_node(left), self.var_node(right)),
        }
    }

    fn find(&self, mut n: usize) -> (usize, Int) {
        let mut off = Int::from(0);
        while self.state.parent[n] != n {
            off += &self.state.offset[n];
            n = self.state.parent[n];
        }
        (n, off)
    }

    /// Records `value(a) = value(b) + c`.
    fn merge(&mut self, a: usize, b: usize, c: Int) {
        let (ra, oa) = self.find(a);
        let (rb, ob) = self.find(b);
        if ra == rb {
            if oa != ob + c {
                self.state.conflict = true;
            }
            return;
        }
        self.state.parent[ra] = rb;
        self.state.offset[ra] = ob + c - oa;
    }

    fn diseq(&mut self, a: usize, b: usize, c: Int) {
        self.state.diseqs.push((a, b, c));
    }

    pub fn assert_literal(&mut self, lit: &TheoryLiteral) {
        match lit {
            TheoryLiteral::VarEq { left, right, offset } => {
                let (l, r) = (self.var_node(left), self.var_node(right));
                self.merge(l, r, offset.clone());
            }
            TheoryLiteral::VarDiseq { left, right, offset } => {
                let (l, r) = (self.var_node(left), self.var_node(right));
                self.diseq(l, r, offset.clone());
            }
            TheoryLiteral::AtomTrue { var } | TheoryLiteral::AtomFalse { var } => {
                let holds = matches!(lit, TheoryLiteral::AtomTrue { .. });
                let atoms = self.annotated.get(var).cloned().unwrap_or_default();
                for a in &atoms {
                    let (l, r) = self.atom_sides(a);
                    if holds {
                        self.merge(l, r, Int::from(0));
                    } else {
                        self.diseq(l, r, Int::from(0));
                    }
                }
            }
        }
    }

    /// Closes under congruence and checks the disequalities.
    pub fn check(&mut self) -> bool {
        loop {
            if self.state.conflict {
                return false;
            }
            let mut sigs: HashMap<(Arc<str>, Vec<(usize, Int)>), usize> = HashMap::new();
            let mut pending = None;
            for i in 0..self.terms.len() {
                let (t, _) = self.terms.get_index(i).unwrap();
                let Term::App(f, args) = t else { continue };
                let sig = (f.clone(), args.iter().map(|&a| self.find(a)).collect::<Vec<_>>());
                match sigs.get(&sig) {
                    Some(&j) => {
                        let (ri, oi) = self.find(i);
                        let (rj, oj) = self.find(j);
                        if ri != rj || oi != oj {
                            pending = Some((i, j));
                            break;
                        }
                    }
                    None => {
                        sigs.insert(sig, i);
                    }
                }
            }
            match pending {
                Some((i, j)) => self.merge(i, j, Int::from(0)),
                None => break,
            }
        }
        let violated = self.state.diseqs.iter().any(|(a, b, c)| {
            let (ra, oa) = self.find(*a);
            let (rb, ob) = self.find(*b);
            ra == rb && oa == ob + c
        });
        !violated
    }

    pub fn push(&mut self) {
        self.saved.push(self.state.clone());
    }

    pub fn pop(&mut self) {
        if let Some(s) = self.saved.pop() {
            self.state = s;
        }
    }

    /// Whether `x = y + c` is entailed by the current (closed) state.
    pub fn entails_eq(&mut self, x: &VarId, y: &VarId, c: &Int) -> bool {
        let (a, b) = (self.var_node(x), self.var_node(y));
        let (ra, oa) = self.find(a);
        let (rb, ob) = self.find(b);
        ra == rb && oa == ob + c
    }

    /// Pairs of distinct variables in the same class, with their offsets.
    pub fn implied_equalities(&mut self) -> Vec<(VarId, VarId, Int)> {
        self.check();
        let vars: Vec<(VarId, usize)> = self
            .terms
            .keys()
            .enumerate()
            .filter_map(|(i, t)| match t {
                Term::Var(v) => Some((v.clone(), i)),
                Term::App(..) => None,
            })
            .collect();
        let mut out = Vec::new();
        for (i, (x, nx)) in vars.iter().enumerate() {
            for (y, ny) in &vars[i + 1..] {
                let (rx, ox) = self.find(*nx);
                let (ry, oy) = self.find(*ny);
                if rx == ry {
                    out.push((x.clone(), y.clone(), ox - oy));
                }
            }
        }
        out
    }
}

/// Decides a literal set from scratch.
pub fn satisfiable(atoms: &[InterfaceAtom], literals: &[TheoryLiteral]) -> bool {
    let mut s = Session::new(atoms);
    for l in literals {
        s.assert_literal(l);
    }
    s.check()
}

/// A minimal unsatisfiable subset of `literals` by deletion filtering.
/// Returns `None` when the whole set is satisfiable.
pub fn conflict_core(atoms: &[InterfaceAtom], literals: &[TheoryLiteral]) -> Option<Vec<TheoryLiteral>> {
    if satisfiable(atoms, literals) {
        return None;
    }
    let mut core: Vec<TheoryLiteral> = literals.to_vec();
    let mut i = 0;
    while i < core.len() {
        let mut trial = core.clone();
        trial.remove(i);
        if satisfiable(atoms, &trial) {
            i += 1;
        } else {
            core = trial;
        }
    }
    Some(core)
}

/// The arrangement induced by an assignment: an equality or disequality for
/// every pair of theory term variables, and the truth value of every
/// annotated atom.
pub fn arrangement(instance: &ImtInstance, a: &Assignment) -> Result<Vec<TheoryLiteral>, ModelError> {
    let vars = instance.theory_vars();
    let mut out = Vec::new();
    for (i, x) in vars.iter().enumerate() {
        for y in &vars[i + 1..] {
            if a.get(x)? == a.get(y)? {
                out.push(TheoryLiteral::var_eq(x.clone(), y.clone()));
            } else {
                out.push(TheoryLiteral::var_diseq(x.clone(), y.clone()));
            }
        }
    }
    for v in instance.annotation_vars() {
        if a.get(&v)? > &Int::from(0) {
            out.push(TheoryLiteral::AtomTrue { var: v });
        } else {
            out.push(TheoryLiteral::AtomFalse { var: v });
        }
    }
    Ok(out)
}

/// Whether some interpretation of the function symbols makes every atom agree
/// with `a`: unannotated atoms must hold, annotated ones must hold exactly when
/// their annotation is positive.
pub fn functional_consistency(instance: &ImtInstance, a: &Assignment) -> Result<bool, ModelError> {
    type Key = (Arc<str>, Vec<Int>);
    let mut required: BTreeMap<Key, Int> = BTreeMap::new();
    let mut forbidden: Vec<(Key, Int)> = Vec::new();
    for atom in &instance.atoms {
        let holds = match &atom.annotation {
            None => true,
            Some(v) => a.get(v)? > &Int::from(0),
        };
        match &atom.kind {
            AtomKind::EqAtom { left, right } => {
                if (a.get(left)? == a.get(right)?) != holds {
                    return Ok(false);
                }
            }
            AtomKind::FunDef { result, fun, args } => {
                let key = (
                    fun.clone(),
                    args.iter().map(|x| a.get(x).cloned()).collect::<Result<Vec<_>, _>>()?,
                );
                let r = a.get(result)?.clone();
                if holds {
                    if let Some(prev) = required.get(&key) {
                        if prev != &r {
                            return Ok(false);
                        }
                    }
                    required.insert(key, r);
                } else {
                    forbidden.push((key, r));
                }
            }
        }
    }
    Ok(forbidden.iter().all(|(k, r)| required.get(k) != Some(r)))
}

/// The EUF theory as seen by the kernel.
#[derive(Clone, Copy, Debug, Default)]
pub struct EufTheory;

impl Theory for EufTheory {
    fn name(&self) -> &str {
        "euf"
    }

    fn check(&self, atoms: &[InterfaceAtom], literals: &[TheoryLiteral]) -> TheoryResult {
        match conflict_core(atoms, literals) {
            None => TheoryResult::Sat,
            Some(core) => TheoryResult::Unsat { core },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &str) -> VarId {
        VarId::new(s)
    }

    fn example_atoms() -> Vec<InterfaceAtom> {
        vec![
            InterfaceAtom::fun_def("v3", "f", vec![v("v1")]),
            InterfaceAtom::fun_def("v4", "f", vec![v("v2")]),
        ]
    }

    #[test]
    fn congruence_conflict_and_core() {
        let atoms = example_atoms();
        let lits = vec![
            TheoryLiteral::var_diseq(v("v1"), v("v3")),
            TheoryLiteral::var_eq(v("v1"), v("v2")),
            TheoryLiteral::var_diseq(v("v3"), v("v4")),
        ];
        assert!(!satisfiable(&atoms, &lits));
        let core = conflict_core(&atoms, &lits).unwrap();
        assert_eq!(core, lits[1..].to_vec());
        assert!(satisfiable(&atoms, &lits[..2]));
    }

    #[test]
    fn offsets_block_congruence() {
        let atoms = example_atoms();
        let lits = vec![
            TheoryLiteral::VarEq { left: v("v1"), right: v("v2"), offset: Int::from(1) },
            TheoryLiteral::var_diseq(v("v3"), v("v4")),
        ];
        assert!(satisfiable(&atoms, &lits));
        let bad = vec![
            TheoryLiteral::VarEq { left: v("x"), right: v("y"), offset: Int::from(1) },
            TheoryLiteral::var_eq(v("x"), v("y")),
        ];
        assert!(!satisfiable(&[], &bad));
    }

    #[test]
    fn annotated_atoms_follow_their_literal() {
        let atoms = vec![
            InterfaceAtom::eq_atom("x", "y").annotated("b"),
            InterfaceAtom::fun_def("r", "g", vec![v("x")]).annotated("c"),
            InterfaceAtom::fun_def("s", "g", vec![v("y")]),
        ];
        let t = |n: &str| TheoryLiteral::AtomTrue { var: v(n) };
        let f = |n: &str| TheoryLiteral::AtomFalse { var: v(n) };
        assert!(satisfiable(&atoms, &[t("b"), f("c")]));
        assert!(satisfiable(&atoms, &[t("b"), t("c")]));
        assert!(!satisfiable(&atoms, &[t("b"), t("c"), TheoryLiteral::var_diseq(v("r"), v("s"))]));
        assert!(!satisfiable(&atoms, &[t("b"), f("c"), TheoryLiteral::var_eq(v("r"), v("s"))]));
        assert!(!satisfiable(&atoms, &[f("b"), TheoryLiteral::var_eq(v("x"), v("y"))]));
    }

    #[test]
    fn push_pop_restores_state() {
        let atoms = example_atoms();
        let mut s = Session::new(&atoms);
        s.push();
        s.assert_literal(&TheoryLiteral::var_eq(v("v1"), v("v2")));
        assert!(s.check());
        assert!(s.entails_eq(&v("v3"), &v("v4"), &Int::from(0)));
        s.assert_literal(&TheoryLiteral::var_diseq(v("v3"), v("v4")));
        assert!(!s.check());
        s.pop();
        assert!(s.check());
        assert!(!s.entails_eq(&v("v3"), &v("v4"), &Int::from(0)));
    }

    #[test]
    fn nested_congruence() {
        let atoms = vec![
            InterfaceAtom::fun_def("b", "f", vec![v("a")]),
            InterfaceAtom::fun_def("c", "f", vec![v("b")]),
            InterfaceAtom::fun_def("d", "f", vec![v("c")]),
        ];
        // a = b implies b = f(b) = c, and then c = f(c) = d.
        let mut s = Session::new(&atoms);
        s.assert_literal(&TheoryLiteral::var_eq(v("a"), v("b")));
        assert!(s.check());
        let eqs = s.implied_equalities();
        assert!(eqs.contains(&(v("a"), v("d"), Int::from(0))));
    }

    fn small_instance() -> ImtInstance {
        let mut inst = ImtInstance::new();
        for n in ["a", "b", "r", "s"] {
            inst.add_var(n, crate::model::VarBounds::closed(0, 2));
        }
        inst.add_fun("f", 1);
        inst.add_atom(InterfaceAtom::fun_def("r", "f", vec![v("a")]));
        inst.add_atom(InterfaceAtom::fun_def("s", "f", vec![v("b")]));
        inst
    }

    proptest! {
        // The arrangement of an assignment is satisfiable exactly when the
        // assignment is functionally consistent.
        #[test]
        fn arrangement_agrees_with_consistency(a in 0i64..3, b in 0i64..3, r in 0i64..3, s in 0i64..3) {
            let inst = small_instance();
            let asg = Assignment::from_pairs([("a", a.into()), ("b", b.into()), ("r", r.into()), ("s", s.into())]);
            let lits = arrangement(&inst, &asg).unwrap();
            prop_assert_eq!(satisfiable(&inst.atoms, &lits), functional_consistency(&inst, &asg).unwrap());
        }

        #[test]
        fn cores_are_unsat_and_minimal(a in 0i64..3, b in 0i64..3, r in 0i64..3, s in 0i64..3) {
            let inst = small_instance();
            let asg = Assignment::from_pairs([("a", a.into()), ("b", b.into()), ("r", r.into()), ("s", s.into())]);
            let lits = arrangement(&inst, &asg).unwrap();
            if let Some(core) = conflict_core(&inst.atoms, &lits) {
                prop_assert!(!satisfiable(&inst.atoms, &core));
                for i in 0..core.len() {
                    let mut sub = core.clone();
                    sub.remove(i);
                    prop_assert!(satisfiable(&inst.atoms, &sub));
                }
            }
        }
    }
}
