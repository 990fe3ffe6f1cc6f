//! Exact-arithmetic data model: linear expressions and constraints, simple
//! equalities, subproblems, assignments and ILP-modulo-T instances.

use indexmap::IndexSet;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

use crate::num::{Int, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("assignment has no value for variable `{0}`")]
    MissingVariable(VarId),
    #[error("variable `{0}` is not declared")]
    UndeclaredVariable(VarId),
    #[error("function `{0}` is not declared")]
    UndeclaredFunction(String),
    #[error("function `{fun}` has arity {expected} but is applied to {found} arguments")]
    ArityMismatch {
        fun: String,
        expected: usize,
        found: usize,
    },
    #[error("annotation variable `{0}` must have bounds within 0..1")]
    AnnotationBounds(VarId),
    #[error("bounds of `{0}` are empty")]
    EmptyBounds(VarId),
    #[error("simple equality relates `{0}` to itself")]
    DegenerateDiff(VarId),
}

/// A variable symbol. Ordering is by name, which is stable across runs.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(Arc<str>);

impl VarId {
    pub fn new(name: &str) -> Self {
        VarId(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId::new(s)
    }
}

impl Serialize for VarId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for VarId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(VarId::new(&String::deserialize(d)?))
    }
}

/// Sparse linear expression `c_1 v_1 + ... + c_n v_n` with no zero coefficient.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinExpr {
    terms: BTreeMap<VarId, Int>,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn var(v: impl Into<VarId>) -> Self {
        let mut e = LinExpr::new();
        e.add_term(v.into(), Int::one());
        e
    }

    pub fn from_terms<V: Into<VarId>>(terms: impl IntoIterator<Item = (V, Int)>) -> Self {
        let mut e = LinExpr::new();
        for (v, c) in terms {
            e.add_term(v.into(), c);
        }
        e
    }

    /// `x - y`
    pub fn difference(x: &VarId, y: &VarId) -> Self {
        LinExpr::from_terms([(x.clone(), Int::one()), (y.clone(), -Int::one())])
    }

    pub fn add_term(&mut self, v: VarId, c: Int) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(v.clone()).or_insert_with(Int::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&v);
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: &Int) {
        for (v, c) in &other.terms {
            self.add_term(v.clone(), c * k);
        }
    }

    pub fn negated(&self) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(v, c)| (v.clone(), -c)).collect(),
        }
    }

    pub fn coeff(&self, v: &VarId) -> Int {
        self.terms.get(v).cloned().unwrap_or_else(Int::zero)
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &Int)> {
        self.terms.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarId> {
        self.terms.keys()
    }

    pub fn eval(&self, a: &Assignment) -> Result<Int, ModelError> {
        let mut acc = Int::zero();
        for (v, c) in &self.terms {
            acc += c * a.get(v)?;
        }
        Ok(acc)
    }

    pub fn eval_rat(&self, point: &BTreeMap<VarId, Rat>) -> Rat {
        let mut acc = Rat::zero();
        for (v, c) in &self.terms {
            if let Some(x) = point.get(v) {
                acc += Rat::from_integer(c.clone()) * x;
            }
        }
        acc
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (v, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            match (i, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if mag.is_one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
}

impl Relation {
    pub fn holds(self, lhs: &Int, rhs: &Int) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    pub fn holds_rat(self, lhs: &Rat, rhs: &Rat) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Relation> {
        Some(match s {
            "<" => Relation::Lt,
            "<=" => Relation::Le,
            "=" => Relation::Eq,
            ">" => Relation::Gt,
            ">=" => Relation::Ge,
            _ => return None,
        })
    }
}

/// `lhs rel rhs` over integer coefficients.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinConstraint {
    pub lhs: LinExpr,
    pub rel: Relation,
    pub rhs: Int,
}

impl LinConstraint {
    pub fn new(lhs: LinExpr, rel: Relation, rhs: impl Into<Int>) -> Self {
        LinConstraint {
            lhs,
            rel,
            rhs: rhs.into(),
        }
    }

    /// The trivially false `0 < 0`, used as a learned contradiction.
    pub fn contradiction() -> Self {
        LinConstraint::new(LinExpr::new(), Relation::Lt, Int::zero())
    }

    pub fn satisfies(&self, a: &Assignment) -> Result<bool, ModelError> {
        Ok(self.rel.holds(&self.lhs.eval(a)?, &self.rhs))
    }

    pub fn holds_at(&self, point: &BTreeMap<VarId, Rat>) -> bool {
        self.rel
            .holds_rat(&self.lhs.eval_rat(point), &Rat::from_integer(self.rhs.clone()))
    }

    /// Integer tightening of strict relations: `e < r` becomes `e <= r - 1`
    /// and `e > r` becomes `e >= r + 1`.
    pub fn normalize(&self) -> LinConstraint {
        match self.rel {
            Relation::Lt => {
                LinConstraint::new(self.lhs.clone(), Relation::Le, &self.rhs - Int::one())
            }
            Relation::Gt => {
                LinConstraint::new(self.lhs.clone(), Relation::Ge, &self.rhs + Int::one())
            }
            _ => self.clone(),
        }
    }

    pub fn is_normal(&self) -> bool {
        !matches!(self.rel, Relation::Lt | Relation::Gt)
    }

    /// The constraint as one or two `e >= r` inequalities (after normalization).
    pub fn ge_forms(&self) -> Vec<(LinExpr, Int)> {
        let n = self.normalize();
        match n.rel {
            Relation::Ge => vec![(n.lhs, n.rhs)],
            Relation::Le => vec![(n.lhs.negated(), -n.rhs)],
            Relation::Eq => vec![(n.lhs.negated(), -n.rhs.clone()), (n.lhs, n.rhs)],
            Relation::Lt | Relation::Gt => unreachable!("normalized"),
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarId> {
        self.lhs.vars()
    }
}

impl fmt::Display for LinConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.rel.symbol(), self.rhs)
    }
}

impl fmt::Debug for LinConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for LinConstraint {
    type Err = crate::frontend::native::ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::frontend::native::parse_constraint(s)
    }
}

impl Serialize for LinConstraint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LinConstraint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `v = c` or `left - right = c`, with `left < right` in variable order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimpleEquality {
    Fix {
        var: VarId,
        #[serde(with = "crate::num::serde_int")]
        value: Int,
    },
    Diff {
        left: VarId,
        right: VarId,
        #[serde(with = "crate::num::serde_int")]
        offset: Int,
    },
}

impl SimpleEquality {
    pub fn fix(var: VarId, value: Int) -> Self {
        SimpleEquality::Fix { var, value }
    }

    /// `vi - vj = c`, stored in canonical orientation.
    pub fn diff(vi: VarId, vj: VarId, c: Int) -> Result<Self, ModelError> {
        if vi == vj {
            return Err(ModelError::DegenerateDiff(vi));
        }
        Ok(if vi < vj {
            SimpleEquality::Diff {
                left: vi,
                right: vj,
                offset: c,
            }
        } else {
            SimpleEquality::Diff {
                left: vj,
                right: vi,
                offset: -c,
            }
        })
    }

    pub fn to_constraint(&self) -> LinConstraint {
        match self {
            SimpleEquality::Fix { var, value } => {
                LinConstraint::new(LinExpr::var(var.clone()), Relation::Eq, value.clone())
            }
            SimpleEquality::Diff {
                left,
                right,
                offset,
            } => LinConstraint::new(LinExpr::difference(left, right), Relation::Eq, offset.clone()),
        }
    }

    pub fn satisfies(&self, a: &Assignment) -> Result<bool, ModelError> {
        Ok(match self {
            SimpleEquality::Fix { var, value } => a.get(var)? == value,
            SimpleEquality::Diff {
                left,
                right,
                offset,
            } => &(a.get(left)? - a.get(right)?) == offset,
        })
    }
}

impl fmt::Display for SimpleEquality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_constraint())
    }
}

impl fmt::Debug for SimpleEquality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct VarBounds {
    pub lo: Option<Int>,
    pub hi: Option<Int>,
}

impl VarBounds {
    pub fn new(lo: Option<Int>, hi: Option<Int>) -> Self {
        VarBounds { lo, hi }
    }

    pub fn closed(lo: impl Into<Int>, hi: impl Into<Int>) -> Self {
        VarBounds {
            lo: Some(lo.into()),
            hi: Some(hi.into()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    pub fn is_empty(&self) -> bool {
        matches!((&self.lo, &self.hi), (Some(l), Some(h)) if l > h)
    }

    pub fn contains(&self, x: &Int) -> bool {
        self.lo.as_ref().map_or(true, |l| l <= x) && self.hi.as_ref().map_or(true, |h| x <= h)
    }
}

/// Per-variable closed intervals; absent variables are unbounded.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Bounds {
    map: BTreeMap<VarId, VarBounds>,
}

impl Bounds {
    pub fn new() -> Self {
        Bounds::default()
    }

    pub fn get(&self, v: &VarId) -> VarBounds {
        self.map.get(v).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, v: VarId, b: VarBounds) {
        self.map.insert(v, b);
    }

    pub fn lower(&self, v: &VarId) -> Option<&Int> {
        self.map.get(v).and_then(|b| b.lo.as_ref())
    }

    pub fn upper(&self, v: &VarId) -> Option<&Int> {
        self.map.get(v).and_then(|b| b.hi.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &VarBounds)> {
        self.map.iter()
    }

    /// The bound facts as constraints `v >= lo` and `v <= hi`.
    pub fn as_constraints(&self) -> Vec<LinConstraint> {
        let mut out = Vec::new();
        for (v, b) in &self.map {
            if let Some(lo) = &b.lo {
                out.push(lower_bound_constraint(v, lo));
            }
            if let Some(hi) = &b.hi {
                out.push(upper_bound_constraint(v, hi));
            }
        }
        out
    }

    /// Number of integer points, or `None` when some listed variable is unbounded.
    pub fn volume<'a>(&self, vars: impl IntoIterator<Item = &'a VarId>) -> Option<Int> {
        let mut vol = Int::one();
        for v in vars {
            let b = self.get(v);
            match (&b.lo, &b.hi) {
                (Some(l), Some(h)) if l <= h => vol *= h - l + Int::one(),
                (Some(_), Some(_)) => return Some(Int::zero()),
                _ => return None,
            }
        }
        Some(vol)
    }
}

pub fn lower_bound_constraint(v: &VarId, lo: &Int) -> LinConstraint {
    LinConstraint::new(LinExpr::var(v.clone()), Relation::Ge, lo.clone())
}

pub fn upper_bound_constraint(v: &VarId, hi: &Int) -> LinConstraint {
    LinConstraint::new(LinExpr::var(v.clone()), Relation::Le, hi.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubproblemId(pub u64);

impl fmt::Display for SubproblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A pair `<C, D>` of constraints and simple equalities.
#[derive(Clone, Debug)]
pub struct Subproblem {
    pub id: SubproblemId,
    pub constraints: IndexSet<LinConstraint>,
    pub equalities: IndexSet<SimpleEquality>,
}

impl Subproblem {
    pub fn new(
        id: SubproblemId,
        constraints: impl IntoIterator<Item = LinConstraint>,
        equalities: impl IntoIterator<Item = SimpleEquality>,
    ) -> Self {
        Subproblem {
            id,
            constraints: constraints.into_iter().map(|c| c.normalize()).collect(),
            equalities: equalities.into_iter().collect(),
        }
    }

    /// `C ∧ D` as linear rows, equalities rendered as constraints.
    pub fn rows(&self) -> Vec<LinConstraint> {
        self.constraints
            .iter()
            .cloned()
            .chain(self.equalities.iter().map(SimpleEquality::to_constraint))
            .collect()
    }

    pub fn satisfied_by(&self, a: &Assignment) -> Result<bool, ModelError> {
        for c in &self.constraints {
            if !c.satisfies(a)? {
                return Ok(false);
            }
        }
        for d in &self.equalities {
            if !d.satisfies(a)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Syntactic equality of the `(C, D)` sets, ignoring ids and order.
    pub fn same_sets(&self, other: &Subproblem) -> bool {
        self.constraints.len() == other.constraints.len()
            && self.equalities.len() == other.equalities.len()
            && self.constraints.iter().all(|c| other.constraints.contains(c))
            && self.equalities.iter().all(|d| other.equalities.contains(d))
    }
}

/// A total map from the instance variables to integers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Assignment {
    values: BTreeMap<VarId, Int>,
}

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn from_pairs<V: Into<VarId>>(pairs: impl IntoIterator<Item = (V, Int)>) -> Self {
        Assignment {
            values: pairs.into_iter().map(|(v, x)| (v.into(), x)).collect(),
        }
    }

    pub fn get(&self, v: &VarId) -> Result<&Int, ModelError> {
        self.values
            .get(v)
            .ok_or_else(|| ModelError::MissingVariable(v.clone()))
    }

    pub fn set(&mut self, v: VarId, x: Int) {
        self.values.insert(v, x);
    }

    pub fn remove(&mut self, v: &VarId) -> Option<Int> {
        self.values.remove(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, &Int)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, v: &VarId) -> bool {
        self.values.contains_key(v)
    }

    pub fn to_rat_point(&self) -> BTreeMap<VarId, Rat> {
        self.values
            .iter()
            .map(|(v, x)| (v.clone(), Rat::from_integer(x.clone())))
            .collect()
    }
}

impl fmt::Debug for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.values.iter()).finish()
    }
}

impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.values.len()))?;
        for (v, x) in &self.values {
            m.serialize_entry(v.name(), &x.to_string())?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        let mut a = Assignment::new();
        for (k, v) in raw {
            let x = Int::from_str(&v).map_err(serde::de::Error::custom)?;
            a.set(VarId::new(&k), x);
        }
        Ok(a)
    }
}

/// Best known T-consistent solution.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Incumbent {
    #[default]
    None,
    Feasible(Assignment),
    /// A feasible witness whose objective can be decreased without bound.
    Unbounded(Assignment),
}

impl Incumbent {
    pub fn assignment(&self) -> Option<&Assignment> {
        match self {
            Incumbent::None => None,
            Incumbent::Feasible(a) | Incumbent::Unbounded(a) => Some(a),
        }
    }
}

/// Objective values extended with both infinities; `NegInf < Finite(_) < PosInf`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjValue {
    NegInf,
    Finite(Int),
    PosInf,
}

impl fmt::Display for ObjValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjValue::NegInf => f.write_str("-inf"),
            ObjValue::Finite(x) => write!(f, "{x}"),
            ObjValue::PosInf => f.write_str("+inf"),
        }
    }
}

impl FromStr for ObjValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "-inf" => Ok(ObjValue::NegInf),
            "+inf" | "inf" => Ok(ObjValue::PosInf),
            _ => Int::from_str(s)
                .map(ObjValue::Finite)
                .map_err(|e| format!("bad objective value `{s}`: {e}")),
        }
    }
}

impl Serialize for ObjValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ObjValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomKind {
    /// `result = fun(args)`
    FunDef {
        result: VarId,
        fun: Arc<str>,
        args: Vec<VarId>,
    },
    /// `left = right`
    EqAtom { left: VarId, right: VarId },
}

/// A theory atom, optionally annotated with a variable `v` so that the atom
/// holds iff `v > 0`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InterfaceAtom {
    pub kind: AtomKind,
    pub annotation: Option<VarId>,
}

impl InterfaceAtom {
    pub fn fun_def(result: impl Into<VarId>, fun: &str, args: Vec<VarId>) -> Self {
        InterfaceAtom {
            kind: AtomKind::FunDef {
                result: result.into(),
                fun: Arc::from(fun),
                args,
            },
            annotation: None,
        }
    }

    pub fn eq_atom(left: impl Into<VarId>, right: impl Into<VarId>) -> Self {
        InterfaceAtom {
            kind: AtomKind::EqAtom {
                left: left.into(),
                right: right.into(),
            },
            annotation: None,
        }
    }

    pub fn annotated(mut self, v: impl Into<VarId>) -> Self {
        self.annotation = Some(v.into());
        self
    }

    /// Variables occurring as terms (annotation excluded).
    pub fn term_vars(&self) -> Vec<&VarId> {
        match &self.kind {
            AtomKind::FunDef { result, args, .. } => {
                std::iter::once(result).chain(args.iter()).collect()
            }
            AtomKind::EqAtom { left, right } => vec![left, right],
        }
    }
}

impl fmt::Display for InterfaceAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            AtomKind::FunDef { result, fun, args } => {
                write!(f, "{result} = {fun}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")?;
            }
            AtomKind::EqAtom { left, right } => write!(f, "({left} = {right})")?,
        }
        if let Some(v) = &self.annotation {
            write!(f, " @ {v}")?;
        }
        Ok(())
    }
}

/// An ILP-modulo-T instance `(C, I, O)` in separate form, with variable bounds.
/// The objective is minimized.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ImtInstance {
    pub vars: IndexSet<VarId>,
    pub bounds: Bounds,
    pub constraints: Vec<LinConstraint>,
    pub atoms: Vec<InterfaceAtom>,
    pub objective: LinExpr,
    pub funs: BTreeMap<Arc<str>, usize>,
}

impl ImtInstance {
    pub fn new() -> Self {
        ImtInstance::default()
    }

    pub fn add_var(&mut self, v: impl Into<VarId>, bounds: VarBounds) -> VarId {
        let v = v.into();
        self.vars.insert(v.clone());
        self.bounds.set(v.clone(), bounds);
        v
    }

    pub fn add_fun(&mut self, name: &str, arity: usize) {
        self.funs.insert(Arc::from(name), arity);
    }

    /// Adds a constraint unless an identical one is already present.
    pub fn add_constraint(&mut self, c: LinConstraint) {
        if !self.constraints.contains(&c) {
            self.constraints.push(c);
        }
    }

    pub fn add_atom(&mut self, a: InterfaceAtom) {
        if !self.atoms.contains(&a) {
            self.atoms.push(a);
        }
    }

    /// Variables occurring as terms of interface atoms, in variable order.
    pub fn theory_vars(&self) -> Vec<VarId> {
        let set: BTreeSet<VarId> = self
            .atoms
            .iter()
            .flat_map(|a| a.term_vars().into_iter().cloned())
            .collect();
        set.into_iter().collect()
    }

    pub fn annotation_vars(&self) -> Vec<VarId> {
        let set: BTreeSet<VarId> = self
            .atoms
            .iter()
            .filter_map(|a| a.annotation.clone())
            .collect();
        set.into_iter().collect()
    }

    /// Variables shared between the linear part and the interface atoms.
    pub fn interface_vars(&self) -> Vec<VarId> {
        let in_c: BTreeSet<&VarId> = self.constraints.iter().flat_map(|c| c.vars()).collect();
        self.theory_vars()
            .into_iter()
            .filter(|v| in_c.contains(v))
            .collect()
    }

    pub fn is_bounded(&self) -> bool {
        self.vars.iter().all(|v| self.bounds.get(v).is_finite())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let declared = |v: &VarId| {
            if self.vars.contains(v) {
                Ok(())
            } else {
                Err(ModelError::UndeclaredVariable(v.clone()))
            }
        };
        for c in &self.constraints {
            c.vars().try_for_each(declared)?;
        }
        self.objective.vars().try_for_each(declared)?;
        for (v, b) in self.bounds.iter() {
            declared(v)?;
            if b.is_empty() {
                return Err(ModelError::EmptyBounds(v.clone()));
            }
        }
        for a in &self.atoms {
            a.term_vars().into_iter().try_for_each(declared)?;
            if let AtomKind::FunDef { fun, args, .. } = &a.kind {
                let arity = *self
                    .funs
                    .get(fun)
                    .ok_or_else(|| ModelError::UndeclaredFunction(fun.to_string()))?;
                if arity != args.len() {
                    return Err(ModelError::ArityMismatch {
                        fun: fun.to_string(),
                        expected: arity,
                        found: args.len(),
                    });
                }
            }
            if let Some(v) = &a.annotation {
                declared(v)?;
                let b = self.bounds.get(v);
                let ok = matches!(&b.lo, Some(l) if !l.is_negative())
                    && matches!(&b.hi, Some(h) if h <= &Int::one());
                if !ok {
                    return Err(ModelError::AnnotationBounds(v.clone()));
                }
            }
        }
        Ok(())
    }

    /// Whether `a` satisfies every constraint and every bound.
    pub fn satisfies_linear(&self, a: &Assignment) -> Result<bool, ModelError> {
        for c in &self.constraints {
            if !c.satisfies(a)? {
                return Ok(false);
            }
        }
        for v in &self.vars {
            if !self.bounds.get(v).contains(a.get(v)?) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn starting_subproblem(&self) -> Subproblem {
        Subproblem::new(SubproblemId(0), self.constraints.iter().cloned(), [])
    }
}

pub fn eval_expr(e: &LinExpr, a: &Assignment) -> Result<Int, ModelError> {
    e.eval(a)
}

pub fn satisfies(c: &LinConstraint, a: &Assignment) -> Result<bool, ModelError> {
    c.satisfies(a)
}

pub fn satisfies_all<'a>(
    cs: impl IntoIterator<Item = &'a LinConstraint>,
    a: &Assignment,
) -> Result<bool, ModelError> {
    for c in cs {
        if !c.satisfies(a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn normalize(c: &LinConstraint) -> LinConstraint {
    c.normalize()
}

/// `obj(none) = +inf`, `obj(A^-inf) = -inf`, otherwise `O(A)`.
pub fn obj_value(objective: &LinExpr, inc: &Incumbent) -> Result<ObjValue, ModelError> {
    Ok(match inc {
        Incumbent::None => ObjValue::PosInf,
        Incumbent::Unbounded(_) => ObjValue::NegInf,
        Incumbent::Feasible(a) => ObjValue::Finite(objective.eval(a)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;
    use proptest::prelude::*;

    fn asg(pairs: &[(&str, i64)]) -> Assignment {
        Assignment::from_pairs(pairs.iter().map(|(v, x)| (*v, int(*x))))
    }

    fn expr(terms: &[(&str, i64)]) -> LinExpr {
        LinExpr::from_terms(terms.iter().map(|(v, c)| (*v, int(*c))))
    }

    #[test]
    fn eval_expr_examples() {
        let e = expr(&[("x", 2), ("y", 3)]);
        assert_eq!(eval_expr(&e, &asg(&[("x", 0), ("y", 4)])).unwrap(), int(12));
        assert_eq!(eval_expr(&LinExpr::new(), &asg(&[("x", 9)])).unwrap(), int(0));
        let e = expr(&[("x", 1), ("y", 1)]);
        assert_eq!(eval_expr(&e, &asg(&[("x", 2), ("y", 1)])).unwrap(), int(3));
    }

    #[test]
    fn eval_expr_missing_variable() {
        let e = expr(&[("x", 1), ("z", 1)]);
        assert_eq!(
            eval_expr(&e, &asg(&[("x", 2)])),
            Err(ModelError::MissingVariable(VarId::new("z")))
        );
    }

    #[test]
    fn zero_coefficients_are_dropped() {
        let mut e = expr(&[("x", 2)]);
        e.add_term(VarId::new("x"), int(-2));
        assert!(e.is_empty());
        assert_eq!(expr(&[("x", 0), ("y", 1)]).len(), 1);
    }

    #[test]
    fn satisfies_examples() {
        let a = asg(&[("x", 2), ("y", 1), ("v1", 3), ("v2", 3), ("v3", 3), ("v4", 0)]);
        let c = LinConstraint::new(expr(&[("v3", 1), ("v4", 1)]), Relation::Ge, 3);
        assert!(satisfies(&c, &a).unwrap());
        let c = LinConstraint::new(expr(&[("x", 1)]), Relation::Lt, 0);
        assert!(!satisfies(&c, &asg(&[("x", 0)])).unwrap());
        assert!(!satisfies(&LinConstraint::contradiction(), &asg(&[])).unwrap());
    }

    #[test]
    fn normalize_examples() {
        let x = || expr(&[("x", 1)]);
        assert_eq!(
            normalize(&LinConstraint::new(x(), Relation::Lt, 5)),
            LinConstraint::new(x(), Relation::Le, 4)
        );
        let c = LinConstraint::new(x(), Relation::Ge, 0);
        assert_eq!(normalize(&c), c);
        let e = expr(&[("x", 2), ("y", 3)]);
        assert_eq!(
            normalize(&LinConstraint::new(e.clone(), Relation::Gt, 11)),
            LinConstraint::new(e, Relation::Ge, 12)
        );
    }

    #[test]
    fn obj_value_examples() {
        let o = expr(&[("x", 1)]);
        assert_eq!(obj_value(&o, &Incumbent::None).unwrap(), ObjValue::PosInf);
        assert_eq!(
            obj_value(&o, &Incumbent::Unbounded(asg(&[("x", 3)]))).unwrap(),
            ObjValue::NegInf
        );
        assert_eq!(
            obj_value(&o, &Incumbent::Feasible(asg(&[("x", 7)]))).unwrap(),
            ObjValue::Finite(int(7))
        );
    }

    #[test]
    fn obj_value_order() {
        assert!(ObjValue::NegInf < ObjValue::Finite(int(-1000)));
        assert!(ObjValue::Finite(int(-1)) < ObjValue::Finite(int(2)));
        assert!(ObjValue::Finite(int(1_000_000)) < ObjValue::PosInf);
    }

    #[test]
    fn diff_is_canonically_oriented() {
        let a = SimpleEquality::diff("y".into(), "x".into(), int(2)).unwrap();
        let b = SimpleEquality::diff("x".into(), "y".into(), int(-2)).unwrap();
        assert_eq!(a, b);
        assert!(SimpleEquality::diff("x".into(), "x".into(), int(0)).is_err());
    }

    #[test]
    fn display_round_trips() {
        let c = LinConstraint::new(expr(&[("x", 2), ("y", -1), ("z", 1)]), Relation::Le, -3);
        assert_eq!(c.to_string(), "2*x - y + z <= -3");
        assert_eq!(c.to_string().parse::<LinConstraint>().unwrap(), c);
        assert_eq!(LinConstraint::contradiction().to_string(), "0 < 0");
        assert_eq!("0 < 0".parse::<LinConstraint>().unwrap(), LinConstraint::contradiction());
    }

    fn arb_constraint() -> impl Strategy<Value = LinConstraint> {
        let rel = prop_oneof![
            Just(Relation::Lt),
            Just(Relation::Le),
            Just(Relation::Eq),
            Just(Relation::Gt),
            Just(Relation::Ge)
        ];
        (proptest::collection::vec(-3i64..=3, 3), rel, -6i64..=6).prop_map(|(cs, rel, r)| {
            let e = LinExpr::from_terms(
                ["a", "b", "c"].iter().zip(cs).map(|(v, c)| (*v, int(c))),
            );
            LinConstraint::new(e, rel, r)
        })
    }

    proptest! {
        #[test]
        fn normalize_preserves_integer_solutions(c in arb_constraint()) {
            let n = normalize(&c);
            prop_assert!(n.is_normal());
            prop_assert_eq!(normalize(&n), n.clone());
            for a in -5..=5 {
                for b in -5..=5 {
                    for cc in -5..=5 {
                        let asg = asg(&[("a", a), ("b", b), ("c", cc)]);
                        prop_assert_eq!(c.satisfies(&asg).unwrap(), n.satisfies(&asg).unwrap());
                    }
                }
            }
        }

        #[test]
        fn simple_equality_matches_its_constraint(x in -4i64..=4, y in -4i64..=4, c in -4i64..=4) {
            let a = asg(&[("x", x), ("y", y)]);
            let d = SimpleEquality::diff("y".into(), "x".into(), int(c)).unwrap();
            prop_assert_eq!(d.satisfies(&a).unwrap(), d.to_constraint().satisfies(&a).unwrap());
            let f = SimpleEquality::fix("x".into(), int(c));
            prop_assert_eq!(f.satisfies(&a).unwrap(), f.to_constraint().satisfies(&a).unwrap());
        }
    }
}
