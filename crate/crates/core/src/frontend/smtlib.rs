//! A QF_UFLIA subset of SMT-LIB 2 with a `minimize` extension.
//!
//! Supported commands: `set-logic`, `set-info`, `set-option`, `declare-fun`,
//! `declare-const`, `define-fun` (nullary only), `assert`, `minimize`,
//! `check-sat`, `get-model`, `exit`. `(set-option :default-bound N)` bounds
//! every otherwise unbounded integer constant by `[-N, N]`.
//!
//! Booleans are 0/1 integers after encoding. Multiplication needs at least
//! all but one factor to be numerals.

use indexmap::{IndexMap, IndexSet};
use num_traits::{One, Zero};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

use crate::num::Int;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmtError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("line {line}: unsupported command `{command}`")]
    UnsupportedCommand { line: usize, command: String },
    #[error("line {line}: sort error: {message}")]
    Sort { line: usize, message: String },
    #[error("line {line}: non-linear term: {message}")]
    NonLinear { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sort {
    Int,
    Bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

impl Cmp {
    pub fn holds(self, l: &Int, r: &Int) -> bool {
        match self {
            Cmp::Le => l <= r,
            Cmp::Lt => l < r,
            Cmp::Ge => l >= r,
            Cmp::Gt => l > r,
            Cmp::Eq => l == r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Num(Int),
    Const(String),
    App(String, Vec<Term>),
    Add(Vec<Term>),
    Neg(Box<Term>),
    Mul(Int, Box<Term>),
    Ite(Box<Formula>, Box<Term>, Box<Term>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Var(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Ite(Box<Formula>, Box<Formula>, Box<Formula>),
    Cmp(Cmp, Term, Term),
}

/// Values of constants and an interpretation of the function symbols.
pub trait Interpretation {
    fn int(&self, name: &str) -> Int;
    fn boolean(&self, name: &str) -> bool;
    fn apply(&self, fun: &str, args: &[Int]) -> Int;
}

impl Term {
    pub fn eval(&self, m: &dyn Interpretation) -> Int {
        match self {
            Term::Num(n) => n.clone(),
            Term::Const(c) => m.int(c),
            Term::App(f, args) => {
                let vals: Vec<Int> = args.iter().map(|a| a.eval(m)).collect();
                m.apply(f, &vals)
            }
            Term::Add(ts) => ts.iter().map(|t| t.eval(m)).sum(),
            Term::Neg(t) => -t.eval(m),
            Term::Mul(k, t) => k * t.eval(m),
            Term::Ite(c, a, b) => {
                if c.eval(m) {
                    a.eval(m)
                } else {
                    b.eval(m)
                }
            }
        }
    }
}

impl Formula {
    pub fn eval(&self, m: &dyn Interpretation) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Var(v) => m.boolean(v),
            Formula::Not(f) => !f.eval(m),
            Formula::And(fs) => fs.iter().all(|f| f.eval(m)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(m)),
            Formula::Implies(a, b) => !a.eval(m) || b.eval(m),
            Formula::Iff(a, b) => a.eval(m) == b.eval(m),
            Formula::Ite(c, a, b) => {
                if c.eval(m) {
                    a.eval(m)
                } else {
                    b.eval(m)
                }
            }
            Formula::Cmp(op, l, r) => op.holds(&l.eval(m), &r.eval(m)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SmtProblem {
    pub logic: Option<String>,
    pub ints: IndexSet<String>,
    pub bools: IndexSet<String>,
    /// Integer-valued functions of integers, with their arities.
    pub funs: IndexMap<String, usize>,
    pub assertions: Vec<Formula>,
    pub objective: Option<Term>,
    pub default_bound: Option<Int>,
    pub check_sat: bool,
    pub get_model: bool,
}

impl SmtProblem {
    /// The conjunction of all assertions.
    pub fn formula(&self) -> Formula {
        Formula::And(self.assertions.clone())
    }
}

#[derive(Clone, Debug)]
enum Sexp {
    Atom { text: String, line: usize, col: usize },
    List { items: Vec<Sexp>, line: usize, col: usize },
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom { line, col, .. } | Sexp::List { line, col, .. } => (*line, *col),
        }
    }

    fn line(&self) -> usize {
        self.pos().0
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            Sexp::List { .. } => None,
        }
    }
}

fn read_sexps(text: &str) -> Result<Vec<Sexp>, SmtError> {
    let chars: Vec<char> = text.chars().collect();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut top = Vec::new();
    let syntax = |line, col, message: &str| SmtError::Syntax { line, col, message: message.to_string() };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let item = match c {
            '(' => {
                stack.push((Vec::new(), l0, c0));
                i += 1;
                col += 1;
                continue;
            }
            ')' => {
                let (items, l, cc) = stack.pop().ok_or_else(|| syntax(l0, c0, "unbalanced `)`"))?;
                i += 1;
                col += 1;
                Sexp::List { items, line: l, col: cc }
            }
            '|' | '"' => {
                let close = c;
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    let Some(&d) = chars.get(i) else {
                        return Err(syntax(l0, c0, "unterminated literal"));
                    };
                    i += 1;
                    if d == '\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                    if d == close {
                        break;
                    }
                    s.push(d);
                }
                if close == '"' {
                    s = format!("\"{s}\"");
                }
                Sexp::Atom { text: s, line: l0, col: c0 }
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '(' | ')' | ';' | '|' | '"') {
                    i += 1;
                    col += 1;
                }
                Sexp::Atom { text: chars[start..i].iter().collect(), line: l0, col: c0 }
            }
        };
        match stack.last_mut() {
            Some((items, _, _)) => items.push(item),
            None => top.push(item),
        }
    }
    if let Some((_, l, c)) = stack.pop() {
        return Err(syntax(l, c, "unclosed `(`"));
    }
    Ok(top)
}

#[derive(Clone, Debug)]
enum Expr {
    T(Term),
    F(Formula),
}

struct Elaborator {
    p: SmtProblem,
    defs: HashMap<String, Expr>,
    scopes: Vec<BTreeMap<String, Expr>>,
}

fn is_numeral(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit())
}

fn sort_of(s: &Sexp) -> Result<Sort, SmtError> {
    match s.atom() {
        Some("Int") => Ok(Sort::Int),
        Some("Bool") => Ok(Sort::Bool),
        _ => Err(SmtError::Sort { line: s.line(), message: "only Int and Bool sorts are supported".into() }),
    }
}

impl Elaborator {
    fn sort_err(line: usize, message: impl Into<String>) -> SmtError {
        SmtError::Sort { line, message: message.into() }
    }

    fn syntax(s: &Sexp, message: impl Into<String>) -> SmtError {
        let (line, col) = s.pos();
        SmtError::Syntax { line, col, message: message.into() }
    }

    fn declared(&self, name: &str) -> bool {
        self.p.ints.contains(name) || self.p.bools.contains(name) || self.p.funs.contains_key(name) || self.defs.contains_key(name)
    }

    fn declare(&mut self, at: &Sexp, name: &str, args: &[Sexp], ret: &Sexp) -> Result<(), SmtError> {
        if self.declared(name) {
            return Err(Self::sort_err(at.line(), format!("`{name}` declared twice")));
        }
        let ret = sort_of(ret)?;
        for a in args {
            if sort_of(a)? != Sort::Int {
                return Err(Self::sort_err(a.line(), "function arguments must be Int"));
            }
        }
        match (args.is_empty(), ret) {
            (true, Sort::Int) => {
                self.p.ints.insert(name.to_string());
            }
            (true, Sort::Bool) => {
                self.p.bools.insert(name.to_string());
            }
            (false, Sort::Int) => {
                self.p.funs.insert(name.to_string(), args.len());
            }
            (false, Sort::Bool) => {
                return Err(Self::sort_err(at.line(), "Bool-valued functions are not supported"));
            }
        }
        Ok(())
    }

    fn term(&self, s: &Sexp) -> Result<Term, SmtError> {
        match self.expr(s)? {
            Expr::T(t) => Ok(t),
            Expr::F(_) => Err(Self::sort_err(s.line(), "expected an Int term, found a Bool")),
        }
    }

    fn formula(&self, s: &Sexp) -> Result<Formula, SmtError> {
        match self.expr(s)? {
            Expr::F(f) => Ok(f),
            Expr::T(_) => Err(Self::sort_err(s.line(), "expected a Bool formula, found an Int")),
        }
    }

    fn lookup(&self, name: &str) -> Option<Expr> {
        for scope in self.scopes.iter().rev() {
            if let Some(e) = scope.get(name) {
                return Some(e.clone());
            }
        }
        self.defs.get(name).cloned()
    }

    fn expr(&self, s: &Sexp) -> Result<Expr, SmtError> {
        let line = s.line();
        match s {
            Sexp::Atom { text, .. } => {
                if is_numeral(text) {
                    return Ok(Expr::T(Term::Num(text.parse().expect("numeral"))));
                }
                match text.as_str() {
                    "true" => return Ok(Expr::F(Formula::True)),
                    "false" => return Ok(Expr::F(Formula::False)),
                    _ => {}
                }
                if let Some(e) = self.lookup(text) {
                    return Ok(e);
                }
                if self.p.ints.contains(text.as_str()) {
                    Ok(Expr::T(Term::Const(text.clone())))
                } else if self.p.bools.contains(text.as_str()) {
                    Ok(Expr::F(Formula::Var(text.clone())))
                } else {
                    Err(Self::sort_err(line, format!("unknown symbol `{text}`")))
                }
            }
            Sexp::List { items, .. } => {
                let Some(head) = items.first().and_then(Sexp::atom) else {
                    return Err(Self::syntax(s, "expected an operator"));
                };
                let args = &items[1..];
                let need = |n: usize| {
                    if args.len() < n {
                        Err(Self::syntax(s, format!("`{head}` needs at least {n} arguments")))
                    } else {
                        Ok(())
                    }
                };
                let exact = |n: usize| {
                    if args.len() != n {
                        Err(Self::syntax(s, format!("`{head}` takes {n} arguments")))
                    } else {
                        Ok(())
                    }
                };
                let terms = || args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>();
                let formulas = || args.iter().map(|a| self.formula(a)).collect::<Result<Vec<_>, _>>();
                let chain = |op: Cmp| -> Result<Expr, SmtError> {
                    need(2)?;
                    let ts = terms()?;
                    let parts: Vec<Formula> =
                        ts.windows(2).map(|w| Formula::Cmp(op, w[0].clone(), w[1].clone())).collect();
                    Ok(Expr::F(if parts.len() == 1 { parts.into_iter().next().unwrap() } else { Formula::And(parts) }))
                };
                match head {
                    "+" => {
                        need(1)?;
                        Ok(Expr::T(Term::Add(terms()?)))
                    }
                    "-" => {
                        need(1)?;
                        let mut ts = terms()?;
                        if ts.len() == 1 {
                            return Ok(Expr::T(Term::Neg(Box::new(ts.pop().unwrap()))));
                        }
                        let first = ts.remove(0);
                        let mut parts = vec![first];
                        parts.extend(ts.into_iter().map(|t| Term::Neg(Box::new(t))));
                        Ok(Expr::T(Term::Add(parts)))
                    }
                    "*" => {
                        need(1)?;
                        let mut k = Int::one();
                        let mut rest: Option<Term> = None;
                        for t in terms()? {
                            match t {
                                Term::Num(n) => k *= n,
                                other if rest.is_none() => rest = Some(other),
                                _ => {
                                    return Err(SmtError::NonLinear {
                                        line,
                                        message: "product of two non-constant terms".into(),
                                    })
                                }
                            }
                        }
                        Ok(Expr::T(match rest {
                            None => Term::Num(k),
                            Some(t) => Term::Mul(k, Box::new(t)),
                        }))
                    }
                    "<=" => chain(Cmp::Le),
                    "<" => chain(Cmp::Lt),
                    ">=" => chain(Cmp::Ge),
                    ">" => chain(Cmp::Gt),
                    "=" => {
                        need(2)?;
                        match self.expr(&args[0])? {
                            Expr::T(_) => chain(Cmp::Eq),
                            Expr::F(_) => {
                                let fs = formulas()?;
                                let parts: Vec<Formula> = fs
                                    .windows(2)
                                    .map(|w| Formula::Iff(Box::new(w[0].clone()), Box::new(w[1].clone())))
                                    .collect();
                                Ok(Expr::F(if parts.len() == 1 { parts.into_iter().next().unwrap() } else { Formula::And(parts) }))
                            }
                        }
                    }
                    "distinct" => {
                        need(2)?;
                        let mut parts = Vec::new();
                        match self.expr(&args[0])? {
                            Expr::T(_) => {
                                let ts = terms()?;
                                for i in 0..ts.len() {
                                    for j in i + 1..ts.len() {
                                        parts.push(Formula::Not(Box::new(Formula::Cmp(Cmp::Eq, ts[i].clone(), ts[j].clone()))));
                                    }
                                }
                            }
                            Expr::F(_) => {
                                let fs = formulas()?;
                                for i in 0..fs.len() {
                                    for j in i + 1..fs.len() {
                                        parts.push(Formula::Not(Box::new(Formula::Iff(
                                            Box::new(fs[i].clone()),
                                            Box::new(fs[j].clone()),
                                        ))));
                                    }
                                }
                            }
                        }
                        Ok(Expr::F(Formula::And(parts)))
                    }
                    "and" => Ok(Expr::F(Formula::And(formulas()?))),
                    "or" => Ok(Expr::F(Formula::Or(formulas()?))),
                    "not" => {
                        exact(1)?;
                        Ok(Expr::F(Formula::Not(Box::new(self.formula(&args[0])?))))
                    }
                    "=>" => {
                        need(2)?;
                        let mut fs = formulas()?;
                        let mut acc = fs.pop().unwrap();
                        while let Some(f) = fs.pop() {
                            acc = Formula::Implies(Box::new(f), Box::new(acc));
                        }
                        Ok(Expr::F(acc))
                    }
                    "xor" => {
                        exact(2)?;
                        let fs = formulas()?;
                        Ok(Expr::F(Formula::Not(Box::new(Formula::Iff(
                            Box::new(fs[0].clone()),
                            Box::new(fs[1].clone()),
                        )))))
                    }
                    "ite" => {
                        exact(3)?;
                        let c = Box::new(self.formula(&args[0])?);
                        match (self.expr(&args[1])?, self.expr(&args[2])?) {
                            (Expr::T(a), Expr::T(b)) => Ok(Expr::T(Term::Ite(c, Box::new(a), Box::new(b)))),
                            (Expr::F(a), Expr::F(b)) => Ok(Expr::F(Formula::Ite(c, Box::new(a), Box::new(b)))),
                            _ => Err(Self::sort_err(line, "ite branches have different sorts")),
                        }
                    }
                    "let" => {
                        exact(2)?;
                        let Sexp::List { items: binds, .. } = &args[0] else {
                            return Err(Self::syntax(&args[0], "expected let bindings"));
                        };
                        let mut scope = BTreeMap::new();
                        for b in binds {
                            match b {
                                Sexp::List { items, .. } if items.len() == 2 && items[0].atom().is_some() => {
                                    scope.insert(items[0].atom().unwrap().to_string(), self.expr(&items[1])?);
                                }
                                _ => return Err(Self::syntax(b, "expected `(name term)`")),
                            }
                        }
                        let mut inner = Elaborator { p: self.p.clone(), defs: self.defs.clone(), scopes: self.scopes.clone() };
                        inner.scopes.push(scope);
                        inner.expr(&args[1])
                    }
                    f if self.p.funs.contains_key(f) => {
                        let arity = self.p.funs[f];
                        if args.len() != arity {
                            return Err(Self::sort_err(
                                line,
                                format!("`{f}` has arity {arity} but is applied to {} arguments", args.len()),
                            ));
                        }
                        Ok(Expr::T(Term::App(f.to_string(), terms()?)))
                    }
                    other => Err(Self::sort_err(line, format!("unknown function `{other}`"))),
                }
            }
        }
    }

    fn command(&mut self, s: &Sexp) -> Result<bool, SmtError> {
        let Sexp::List { items, line, .. } = s else {
            return Err(Self::syntax(s, "expected a command"));
        };
        let line = *line;
        let Some(head) = items.first().and_then(Sexp::atom) else {
            return Err(Self::syntax(s, "expected a command name"));
        };
        let args = &items[1..];
        let name_of = |i: usize| -> Result<&str, SmtError> {
            args.get(i).and_then(Sexp::atom).ok_or_else(|| Self::syntax(s, "expected a symbol"))
        };
        match head {
            "set-logic" => {
                let logic = name_of(0)?;
                if !matches!(logic, "QF_LIA" | "QF_UFLIA" | "QF_UF" | "ALL") {
                    return Err(SmtError::UnsupportedCommand { line, command: format!("set-logic {logic}") });
                }
                self.p.logic = Some(logic.to_string());
            }
            "set-info" => {}
            "set-option" => {
                if name_of(0)? == ":default-bound" {
                    let n = name_of(1)?;
                    if !is_numeral(n) {
                        return Err(Self::syntax(s, "`:default-bound` expects a numeral"));
                    }
                    self.p.default_bound = Some(n.parse().expect("numeral"));
                }
            }
            "declare-fun" => {
                let name = name_of(0)?.to_string();
                let (Some(Sexp::List { items: params, .. }), Some(ret), 3) = (args.get(1), args.get(2), args.len()) else {
                    return Err(Self::syntax(s, "expected `(declare-fun name (sorts) sort)`"));
                };
                self.declare(s, &name, params, ret)?;
            }
            "declare-const" => {
                let name = name_of(0)?.to_string();
                let (Some(ret), 2) = (args.get(1), args.len()) else {
                    return Err(Self::syntax(s, "expected `(declare-const name sort)`"));
                };
                self.declare(s, &name, &[], ret)?;
            }
            "define-fun" => {
                let name = name_of(0)?.to_string();
                let (Some(Sexp::List { items: params, .. }), Some(ret), Some(body), 4) =
                    (args.get(1), args.get(2), args.get(3), args.len())
                else {
                    return Err(Self::syntax(s, "expected `(define-fun name () sort term)`"));
                };
                if !params.is_empty() {
                    return Err(SmtError::UnsupportedCommand { line, command: "define-fun with parameters".into() });
                }
                if self.declared(&name) {
                    return Err(Self::sort_err(line, format!("`{name}` declared twice")));
                }
                let e = match sort_of(ret)? {
                    Sort::Int => Expr::T(self.term(body)?),
                    Sort::Bool => Expr::F(self.formula(body)?),
                };
                self.defs.insert(name, e);
            }
            "assert" => {
                if args.len() != 1 {
                    return Err(Self::syntax(s, "`assert` takes one formula"));
                }
                let f = self.formula(&args[0])?;
                self.p.assertions.push(f);
            }
            "minimize" => {
                if args.len() != 1 {
                    return Err(Self::syntax(s, "`minimize` takes one term"));
                }
                if self.p.objective.is_some() {
                    return Err(SmtError::UnsupportedCommand { line, command: "second minimize".into() });
                }
                self.p.objective = Some(self.term(&args[0])?);
            }
            "check-sat" => self.p.check_sat = true,
            "get-model" => self.p.get_model = true,
            "exit" => return Ok(false),
            other => return Err(SmtError::UnsupportedCommand { line, command: other.to_string() }),
        }
        Ok(true)
    }
}

/// Parses a script; the formula tree is kept as written.
pub fn parse_smtlib(text: &str) -> Result<SmtProblem, SmtError> {
    let mut el = Elaborator { p: SmtProblem::default(), defs: HashMap::new(), scopes: Vec::new() };
    for s in read_sexps(text)? {
        if !el.command(&s)? {
            break;
        }
    }
    Ok(el.p)
}

/// Values for constants, with functions read from a finite table (default 0).
#[derive(Clone, Debug, Default)]
pub struct TableModel {
    pub values: BTreeMap<String, Int>,
    pub tables: BTreeMap<(String, Vec<Int>), Int>,
}

impl Interpretation for TableModel {
    fn int(&self, name: &str) -> Int {
        self.values.get(name).cloned().unwrap_or_else(Int::zero)
    }

    fn boolean(&self, name: &str) -> bool {
        self.int(name) > Int::zero()
    }

    fn apply(&self, fun: &str, args: &[Int]) -> Int {
        self.tables.get(&(fun.to_string(), args.to_vec())).cloned().unwrap_or_else(Int::zero)
    }
}
