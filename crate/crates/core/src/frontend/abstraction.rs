//! Variable abstraction and the Boolean/big-M encodings.
//!
//! Function applications are flattened so that every argument is a variable:
//! `f(x + 1)` becomes `v = f(w)` with `w - x = 1`. Linear atoms under Boolean
//! structure get a 0/1 indicator linked through the variable bounds, equalities
//! between two variables become annotated theory atoms, and the Boolean
//! skeleton is clausified with polarity-aware definitions. Each clause is the
//! row `sum(l_i) >= 1` where a negative literal `!b` contributes `1 - b`.

use num_traits::{One, Signed, Zero};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

use super::smtlib::{Cmp, Formula, SmtProblem, Term};
use crate::model::{Bounds, ImtInstance, InterfaceAtom, LinConstraint, LinExpr, Relation, VarBounds, VarId};
use crate::num::Int;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("variable `{0}` needs finite bounds for the encoding")]
    UnboundedForEncoding(VarId),
}

/// The encoded instance and how it relates to the source problem.
#[derive(Clone, Debug)]
pub struct Abstraction {
    pub instance: ImtInstance,
    /// Constant part of the objective, dropped from `instance.objective`.
    pub objective_offset: Int,
    /// The declared constants of the source, in declaration order.
    pub source_vars: Vec<VarId>,
    /// Whether the source had a `minimize` command.
    pub has_objective: bool,
}

/// `e + k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
struct Affine {
    e: LinExpr,
    k: Int,
}

impl Affine {
    fn constant(k: Int) -> Self {
        Affine { e: LinExpr::new(), k }
    }

    fn var(v: &VarId) -> Self {
        Affine { e: LinExpr::var(v.clone()), k: Int::zero() }
    }

    fn add(&mut self, other: &Affine, scale: &Int) {
        self.e.add_scaled(&other.e, scale);
        self.k += &other.k * scale;
    }

    fn scaled(&self, s: &Int) -> Affine {
        let mut out = Affine::default();
        out.add(self, s);
        out
    }

    fn minus(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        out.add(other, &-Int::one());
        out
    }

    /// `self rel 0` as a constraint.
    fn rel0(&self, rel: Relation) -> LinConstraint {
        LinConstraint::new(self.e.clone(), rel, -self.k.clone())
    }

    fn as_var(&self) -> Option<&VarId> {
        if self.k.is_zero() && self.e.len() == 1 {
            let (v, c) = self.e.iter().next().unwrap();
            if c.is_one() {
                return Some(v);
            }
        }
        None
    }
}

/// Range of `e` over the box; `None` marks an infinite side.
fn expr_range(e: &LinExpr, bounds: &Bounds) -> (Result<Int, VarId>, Result<Int, VarId>) {
    let mut lo = Ok(Int::zero());
    let mut hi = Ok(Int::zero());
    for (v, c) in e.iter() {
        let b = bounds.get(v);
        let (for_lo, for_hi) = if c.is_positive() { (&b.lo, &b.hi) } else { (&b.hi, &b.lo) };
        lo = match (lo, for_lo) {
            (Ok(acc), Some(x)) => Ok(acc + c * x),
            (Ok(_), None) => Err(v.clone()),
            (e, _) => e,
        };
        hi = match (hi, for_hi) {
            (Ok(acc), Some(x)) => Ok(acc + c * x),
            (Ok(_), None) => Err(v.clone()),
            (e, _) => e,
        };
    }
    (lo, hi)
}

/// Links `v` to the atom `lhs <= rhs` so that, on every point of the box,
/// `v >= 1` iff the atom holds (for `v` in `0..1`). With `k` the box maximum
/// of `lhs` and `m` its minimum minus one, the rows are
/// `lhs + (k - rhs) v <= k` and `lhs - (m - rhs) v >= rhs + 1`.
pub fn encode_atom_indicator(
    lhs: &LinExpr,
    rhs: &Int,
    v: &VarId,
    bounds: &Bounds,
) -> Result<Vec<LinConstraint>, EncodeError> {
    let (lo, hi) = expr_range(lhs, bounds);
    let k = hi.map_err(EncodeError::UnboundedForEncoding)?;
    let m = lo.map_err(EncodeError::UnboundedForEncoding)? - Int::one();
    let mut first = lhs.clone();
    first.add_term(v.clone(), &k - rhs);
    let mut second = lhs.clone();
    second.add_term(v.clone(), rhs - &m);
    Ok(vec![
        LinConstraint::new(first, Relation::Le, k),
        LinConstraint::new(second, Relation::Ge, rhs + Int::one()),
    ])
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Lit {
    Const(bool),
    Pos(VarId),
    Neg(VarId),
}

impl Lit {
    fn not(&self) -> Lit {
        match self {
            Lit::Const(b) => Lit::Const(!b),
            Lit::Pos(v) => Lit::Neg(v.clone()),
            Lit::Neg(v) => Lit::Pos(v.clone()),
        }
    }

    /// The 0/1 value of the literal as an affine expression.
    fn affine(&self) -> Affine {
        match self {
            Lit::Const(b) => Affine::constant(if *b { Int::one() } else { Int::zero() }),
            Lit::Pos(v) => Affine::var(v),
            Lit::Neg(v) => {
                let mut a = Affine::constant(Int::one());
                a.add(&Affine::var(v), &-Int::one());
                a
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Polarity {
    pos: bool,
    neg: bool,
}

const POS: Polarity = Polarity { pos: true, neg: false };
const BOTH: Polarity = Polarity { pos: true, neg: true };

impl Polarity {
    fn flip(self) -> Polarity {
        Polarity { pos: self.neg, neg: self.pos }
    }
}

struct Encoder {
    inst: ImtInstance,
    taken: BTreeSet<String>,
    counter: usize,
    default_bound: Option<Int>,
    apps: HashMap<(String, Vec<VarId>), VarId>,
    named: HashMap<Affine, VarId>,
    atoms: HashMap<(LinExpr, Int), Lit>,
    eqs: HashMap<(VarId, VarId), Lit>,
}

impl Encoder {
    fn fresh(&mut self, prefix: &str, bounds: VarBounds) -> VarId {
        loop {
            self.counter += 1;
            let name = format!("_{prefix}{}", self.counter);
            if self.taken.insert(name.clone()) {
                return self.inst.add_var(name.as_str(), bounds);
            }
        }
    }

    fn fresh_bool(&mut self) -> VarId {
        self.fresh("b", VarBounds::closed(0, 1))
    }

    fn default_bounds(&self) -> VarBounds {
        match &self.default_bound {
            Some(n) => VarBounds::new(Some(-n.clone()), Some(n.clone())),
            None => VarBounds::new(None, None),
        }
    }

    fn range(&self, a: &Affine) -> VarBounds {
        let (lo, hi) = expr_range(&a.e, &self.inst.bounds);
        VarBounds::new(lo.ok().map(|x| x + &a.k), hi.ok().map(|x| x + &a.k))
    }

    /// A variable equal to `a`, reusing `a` itself when it is one.
    fn name(&mut self, a: &Affine) -> VarId {
        if let Some(v) = a.as_var() {
            return v.clone();
        }
        if let Some(v) = self.named.get(a) {
            return v.clone();
        }
        let w = self.fresh("v", self.range(a));
        self.inst.add_constraint(Affine::var(&w).minus(a).rel0(Relation::Eq));
        self.named.insert(a.clone(), w.clone());
        w
    }

    fn linearize(&mut self, t: &Term) -> Result<Affine, EncodeError> {
        Ok(match t {
            Term::Num(n) => Affine::constant(n.clone()),
            Term::Const(c) => Affine::var(&VarId::new(c)),
            Term::Add(ts) => {
                let mut acc = Affine::default();
                for t in ts {
                    acc.add(&self.linearize(t)?, &Int::one());
                }
                acc
            }
            Term::Neg(t) => self.linearize(t)?.scaled(&-Int::one()),
            Term::Mul(k, t) => self.linearize(t)?.scaled(k),
            Term::App(f, args) => {
                let mut vars = Vec::with_capacity(args.len());
                for a in args {
                    let a = self.linearize(a)?;
                    vars.push(self.name(&a));
                }
                let key = (f.clone(), vars.clone());
                if let Some(r) = self.apps.get(&key) {
                    return Ok(Affine::var(r));
                }
                let r = self.fresh("v", self.default_bounds());
                self.inst.add_fun(f, args.len());
                self.inst.add_atom(InterfaceAtom::fun_def(r.clone(), f, vars));
                self.apps.insert(key, r.clone());
                Affine::var(&r)
            }
            Term::Ite(c, a, b) => {
                let a = self.linearize(a)?;
                let b = self.linearize(b)?;
                let cond = self.encode(c, BOTH)?;
                match cond {
                    Lit::Const(true) => a,
                    Lit::Const(false) => b,
                    _ => {
                        let (ra, rb) = (self.range(&a), self.range(&b));
                        let lo = ra.lo.zip(rb.lo).map(|(x, y)| x.min(y));
                        let hi = ra.hi.zip(rb.hi).map(|(x, y)| x.max(y));
                        let r = self.fresh("v", VarBounds::new(lo, hi));
                        self.link_unless(&Affine::var(&r).minus(&a), &cond.not().affine(), &r)?;
                        self.link_unless(&Affine::var(&r).minus(&b), &cond.affine(), &r)?;
                        Affine::var(&r)
                    }
                }
            }
        })
    }

    /// `d = 0` whenever the 0/1 expression `off` is 0, using the range of `d`.
    fn link_unless(&mut self, d: &Affine, off: &Affine, r: &VarId) -> Result<(), EncodeError> {
        let range = self.range(d);
        let (Some(lo), Some(hi)) = (range.lo, range.hi) else {
            return Err(EncodeError::UnboundedForEncoding(r.clone()));
        };
        let mut upper = d.clone();
        upper.add(off, &-hi);
        self.inst.add_constraint(upper.rel0(Relation::Le));
        let mut lower = d.clone();
        lower.add(off, &-lo);
        self.inst.add_constraint(lower.rel0(Relation::Ge));
        Ok(())
    }

    fn clause(&mut self, lits: &[Lit]) {
        let mut seen = BTreeSet::new();
        let mut sum = Affine::default();
        for l in lits {
            match l {
                Lit::Const(true) => return,
                Lit::Const(false) => continue,
                _ => {}
            }
            if seen.contains(&l.not()) {
                return;
            }
            if seen.insert(l.clone()) {
                sum.add(&l.affine(), &Int::one());
            }
        }
        sum.add(&Affine::constant(Int::one()), &-Int::one());
        self.inst.add_constraint(sum.rel0(Relation::Ge));
    }

    fn indicator(&mut self, lhs: LinExpr, rhs: Int) -> Result<Lit, EncodeError> {
        if lhs.is_empty() {
            return Ok(Lit::Const(Int::zero() <= rhs));
        }
        let key = (lhs, rhs);
        if let Some(l) = self.atoms.get(&key) {
            return Ok(l.clone());
        }
        let v = self.fresh_bool();
        for c in encode_atom_indicator(&key.0, &key.1, &v, &self.inst.bounds)? {
            self.inst.add_constraint(c);
        }
        self.atoms.insert(key, Lit::Pos(v.clone()));
        Ok(Lit::Pos(v))
    }

    fn conj(&mut self, lits: Vec<Lit>, pol: Polarity) -> Lit {
        let mut rest = Vec::new();
        for l in lits {
            match l {
                Lit::Const(false) => return Lit::Const(false),
                Lit::Const(true) => {}
                l if !rest.contains(&l) => rest.push(l),
                _ => {}
            }
        }
        match rest.len() {
            0 => return Lit::Const(true),
            1 => return rest.pop().unwrap(),
            _ => {}
        }
        let t = Lit::Pos(self.fresh_bool());
        if pol.pos {
            for l in &rest {
                self.clause(&[t.not(), l.clone()]);
            }
        }
        if pol.neg {
            let mut c = vec![t.clone()];
            c.extend(rest.iter().map(Lit::not));
            self.clause(&c);
        }
        t
    }

    fn disj(&mut self, lits: Vec<Lit>, pol: Polarity) -> Lit {
        let negated: Vec<Lit> = lits.iter().map(Lit::not).collect();
        self.conj(negated, pol.flip()).not()
    }

    fn encode(&mut self, f: &Formula, pol: Polarity) -> Result<Lit, EncodeError> {
        Ok(match f {
            Formula::True => Lit::Const(true),
            Formula::False => Lit::Const(false),
            Formula::Var(b) => Lit::Pos(VarId::new(b)),
            Formula::Not(g) => self.encode(g, pol.flip())?.not(),
            Formula::And(fs) => {
                let lits = fs.iter().map(|g| self.encode(g, pol)).collect::<Result<Vec<_>, _>>()?;
                self.conj(lits, pol)
            }
            Formula::Or(fs) => {
                let lits = fs.iter().map(|g| self.encode(g, pol)).collect::<Result<Vec<_>, _>>()?;
                self.disj(lits, pol)
            }
            Formula::Implies(a, b) => {
                let la = self.encode(a, pol.flip())?.not();
                let lb = self.encode(b, pol)?;
                self.disj(vec![la, lb], pol)
            }
            Formula::Iff(a, b) => {
                let la = self.encode(a, BOTH)?;
                let lb = self.encode(b, BOTH)?;
                match (&la, &lb) {
                    (Lit::Const(x), _) => {
                        if *x {
                            lb
                        } else {
                            lb.not()
                        }
                    }
                    (_, Lit::Const(y)) => {
                        if *y {
                            la
                        } else {
                            la.not()
                        }
                    }
                    _ if la == lb => Lit::Const(true),
                    _ if la == lb.not() => Lit::Const(false),
                    _ => {
                        let t = Lit::Pos(self.fresh_bool());
                        if pol.pos {
                            self.clause(&[t.not(), la.not(), lb.clone()]);
                            self.clause(&[t.not(), la.clone(), lb.not()]);
                        }
                        if pol.neg {
                            self.clause(&[t.clone(), la.clone(), lb.clone()]);
                            self.clause(&[t.clone(), la.not(), lb.not()]);
                        }
                        t
                    }
                }
            }
            Formula::Ite(c, a, b) => {
                let lc = self.encode(c, BOTH)?;
                match lc {
                    Lit::Const(true) => self.encode(a, pol)?,
                    Lit::Const(false) => self.encode(b, pol)?,
                    _ => {
                        let la = self.encode(a, pol)?;
                        let lb = self.encode(b, pol)?;
                        let t = Lit::Pos(self.fresh_bool());
                        if pol.pos {
                            self.clause(&[t.not(), lc.not(), la.clone()]);
                            self.clause(&[t.not(), lc.clone(), lb.clone()]);
                        }
                        if pol.neg {
                            self.clause(&[t.clone(), lc.not(), la.not()]);
                            self.clause(&[t.clone(), lc.clone(), lb.not()]);
                        }
                        t
                    }
                }
            }
            Formula::Cmp(op, l, r) => {
                let l = self.linearize(l)?;
                let r = self.linearize(r)?;
                if *op == Cmp::Eq {
                    if let (Some(x), Some(y)) = (l.as_var(), r.as_var()) {
                        return Ok(self.equality(x.clone(), y.clone()));
                    }
                }
                let d = l.minus(&r);
                let one = Int::one();
                // every comparison as one or two atoms `e <= r`
                let le = |a: &Affine, slack: &Int| (a.e.clone(), -&a.k - slack);
                let neg = d.scaled(&-Int::one());
                match op {
                    Cmp::Le => self.indicator_of(le(&d, &Int::zero()))?,
                    Cmp::Lt => self.indicator_of(le(&d, &one))?,
                    Cmp::Ge => self.indicator_of(le(&neg, &Int::zero()))?,
                    Cmp::Gt => self.indicator_of(le(&neg, &one))?,
                    Cmp::Eq => {
                        let a = self.indicator_of(le(&d, &Int::zero()))?;
                        let b = self.indicator_of(le(&neg, &Int::zero()))?;
                        self.conj(vec![a, b], pol)
                    }
                }
            }
        })
    }

    fn indicator_of(&mut self, (e, r): (LinExpr, Int)) -> Result<Lit, EncodeError> {
        self.indicator(e, r)
    }

    fn equality(&mut self, x: VarId, y: VarId) -> Lit {
        if x == y {
            return Lit::Const(true);
        }
        let key = if x < y { (x, y) } else { (y, x) };
        if let Some(l) = self.eqs.get(&key) {
            return l.clone();
        }
        let v = self.fresh_bool();
        self.inst.add_atom(InterfaceAtom::eq_atom(key.0.clone(), key.1.clone()).annotated(v.clone()));
        self.eqs.insert(key, Lit::Pos(v.clone()));
        Lit::Pos(v)
    }

    /// A conjunct with no Boolean structure goes straight into the rows.
    fn top_level(&mut self, f: &Formula) -> Result<(), EncodeError> {
        if let Formula::Cmp(op, l, r) = f {
            if !has_ite(l) && !has_ite(r) {
                let d = self.linearize(l)?.minus(&self.linearize(r)?);
                let rel = match op {
                    Cmp::Le => Relation::Le,
                    Cmp::Lt => Relation::Lt,
                    Cmp::Ge => Relation::Ge,
                    Cmp::Gt => Relation::Gt,
                    Cmp::Eq => Relation::Eq,
                };
                if d.e.is_empty() {
                    if !rel.holds(&d.k, &Int::zero()) {
                        self.clause(&[]);
                    }
                } else {
                    self.inst.add_constraint(d.rel0(rel));
                }
                return Ok(());
            }
        }
        let lits = match f {
            Formula::Or(fs) => fs.iter().map(|g| self.encode(g, POS)).collect::<Result<Vec<_>, _>>()?,
            Formula::Implies(a, b) => vec![self.encode(a, POS.flip())?.not(), self.encode(b, POS)?],
            _ => vec![self.encode(f, POS)?],
        };
        self.clause(&lits);
        Ok(())
    }
}

fn has_ite(t: &Term) -> bool {
    match t {
        Term::Num(_) | Term::Const(_) => false,
        Term::App(_, ts) | Term::Add(ts) => ts.iter().any(has_ite),
        Term::Neg(t) | Term::Mul(_, t) => has_ite(t),
        Term::Ite(..) => true,
    }
}

fn conjuncts<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
    match f {
        Formula::And(fs) => fs.iter().for_each(|g| conjuncts(g, out)),
        Formula::True => {}
        _ => out.push(f),
    }
}

/// `x op n` or `n op x` on a declared constant, as bounds on `x`.
fn bound_fact(f: &Formula, ints: &BTreeSet<&str>) -> Option<(VarId, Option<Int>, Option<Int>)> {
    let Formula::Cmp(op, l, r) = f else {
        return None;
    };
    let (x, n, op) = match (l, r) {
        (Term::Const(x), Term::Num(n)) => (x, n, *op),
        (Term::Num(n), Term::Const(x)) => (
            x,
            n,
            match op {
                Cmp::Le => Cmp::Ge,
                Cmp::Lt => Cmp::Gt,
                Cmp::Ge => Cmp::Le,
                Cmp::Gt => Cmp::Lt,
                Cmp::Eq => Cmp::Eq,
            },
        ),
        _ => return None,
    };
    if !ints.contains(x.as_str()) {
        return None;
    }
    let one = Int::one();
    let (lo, hi) = match op {
        Cmp::Le => (None, Some(n.clone())),
        Cmp::Lt => (None, Some(n - &one)),
        Cmp::Ge => (Some(n.clone()), None),
        Cmp::Gt => (Some(n + &one), None),
        Cmp::Eq => (Some(n.clone()), Some(n.clone())),
    };
    Some((VarId::new(x), lo, hi))
}

/// Encodes `p` as an instance in separate form.
///
/// Top-level single-variable comparisons on integer constants become bounds.
/// Constants still lacking a bound, and every function result, get
/// `[-n, n]` from `default_bound` (or the script's `:default-bound`).
pub fn abstract_variables(p: &SmtProblem, default_bound: Option<&Int>) -> Result<Abstraction, EncodeError> {
    let default_bound = default_bound.cloned().or_else(|| p.default_bound.clone());
    let mut enc = Encoder {
        inst: ImtInstance::new(),
        taken: p.ints.iter().chain(p.bools.iter()).chain(p.funs.keys()).cloned().collect(),
        counter: 0,
        default_bound,
        apps: HashMap::new(),
        named: HashMap::new(),
        atoms: HashMap::new(),
        eqs: HashMap::new(),
    };
    let ints: BTreeSet<&str> = p.ints.iter().map(String::as_str).collect();
    let mut all = Vec::new();
    for f in &p.assertions {
        conjuncts(f, &mut all);
    }
    let mut bounds: HashMap<VarId, (Option<Int>, Option<Int>)> = HashMap::new();
    let mut rest = Vec::new();
    for f in all {
        match bound_fact(f, &ints) {
            Some((x, lo, hi)) => {
                let e = bounds.entry(x).or_default();
                if let Some(lo) = lo {
                    e.0 = Some(e.0.take().map_or(lo.clone(), |o| o.max(lo)));
                }
                if let Some(hi) = hi {
                    e.1 = Some(e.1.take().map_or(hi.clone(), |o| o.min(hi)));
                }
            }
            None => rest.push(f),
        }
    }
    let mut source_vars = Vec::new();
    for x in &p.ints {
        let v = VarId::new(x);
        let (lo, hi) = bounds.remove(&v).unwrap_or_default();
        let d = enc.default_bounds();
        enc.inst.add_var(v.clone(), VarBounds::new(lo.or(d.lo), hi.or(d.hi)));
        source_vars.push(v);
    }
    for b in &p.bools {
        let v = enc.inst.add_var(b.as_str(), VarBounds::closed(0, 1));
        source_vars.push(v);
    }
    for (f, n) in &p.funs {
        enc.inst.add_fun(f, *n);
    }
    for f in rest {
        enc.top_level(f)?;
    }
    let mut objective_offset = Int::zero();
    if let Some(t) = &p.objective {
        let a = enc.linearize(t)?;
        enc.inst.objective = a.e;
        objective_offset = a.k;
    }
    Ok(Abstraction { instance: enc.inst, objective_offset, source_vars, has_objective: p.objective.is_some() })
}
