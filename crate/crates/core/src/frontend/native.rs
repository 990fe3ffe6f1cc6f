//! The line-oriented `.imt` format.
//!
//! ```text
//! # comment
//! [vars]
//! x int 0 5
//! y int -inf inf
//! [funs]
//! f 1
//! [objective]
//! min 2*x + y
//! [constraints]
//! x + y >= 3
//! x <= y + 1
//! [atoms]
//! y = f(x)
//! (x = y) @ b
//! ```
//!
//! Constraints may have variables and constants on both sides; they are
//! moved to `lhs rel constant` form. Function symbols are only allowed in
//! `[atoms]`. An atom may carry an annotation `@ v`.

use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

use crate::model::{
    ImtInstance, InterfaceAtom, LinConstraint, LinExpr, ModelError, Relation, VarBounds, VarId,
};
use crate::num::Int;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("sort error on line {line}: {message}")]
    Sort { line: usize, message: String },
    #[error("line {line}: function `{fun}` used outside [atoms]")]
    Separation { line: usize, fun: String },
    #[error("invalid instance: {0}")]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(Int),
    Op(&'static str),
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '\'' | '!' | '$' | '?' | '~')
}

fn tokenize(text: &str, line: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push((Tok::Num(s.parse().expect("digits")), col));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let op = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "==" => Some("="),
                _ => None,
            };
            if let Some(op) = op {
                out.push((Tok::Op(op), col));
                i += 2;
                continue;
            }
            let op = match c {
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '@' => "@",
                '=' => "=",
                '<' => "<",
                '>' => ">",
                _ => {
                    return Err(ParseError::Syntax { line, col, message: format!("unexpected character `{c}`") })
                }
            };
            out.push((Tok::Op(op), col));
            i += 1;
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col: self.col(), message: message.into() }
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: &str) -> Result<(), ParseError> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{op}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.err("expected an identifier")),
        }
    }

    fn done(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(self.err("unexpected trailing input"))
        } else {
            Ok(())
        }
    }

    /// `expr := ['-'] term (('+' | '-') term)*`, `term := [num ['*']] ident | num`.
    /// Returns the variable part and the constant part.
    fn expr(&mut self) -> Result<(LinExpr, Int), ParseError> {
        let mut e = LinExpr::new();
        let mut k = Int::from(0);
        let mut sign = Int::from(1);
        if self.eat("-") {
            sign = Int::from(-1);
        } else {
            self.eat("+");
        }
        loop {
            match self.next() {
                Some(Tok::Num(n)) => {
                    let n = n.clone();
                    let has_star = self.eat("*");
                    match self.peek() {
                        Some(Tok::Ident(_)) => {
                            let v = self.var()?;
                            e.add_term(v, &sign * n);
                        }
                        _ if has_star => return Err(self.err("expected a variable after `*`")),
                        _ => k += &sign * n,
                    }
                }
                Some(Tok::Ident(_)) => {
                    self.pos -= 1;
                    let v = self.var()?;
                    e.add_term(v, sign.clone());
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.err("expected a term"));
                }
            }
            if self.eat("+") {
                sign = Int::from(1);
            } else if self.eat("-") {
                sign = Int::from(-1);
            } else {
                return Ok((e, k));
            }
        }
    }

    fn var(&mut self) -> Result<VarId, ParseError> {
        let name = self.ident()?;
        if matches!(self.peek(), Some(Tok::Op("("))) {
            return Err(ParseError::Separation { line: self.line, fun: name });
        }
        Ok(VarId::new(&name))
    }

    fn relation(&mut self) -> Result<Relation, ParseError> {
        match self.next() {
            Some(Tok::Op(o)) => Relation::from_symbol(o).ok_or_else(|| {
                self.pos -= 1;
                self.err("expected a relation")
            }),
            _ => {
                self.pos -= 1;
                Err(self.err("expected a relation"))
            }
        }
    }
}

fn parse_constraint_line(text: &str, line: usize) -> Result<LinConstraint, ParseError> {
    let toks = tokenize(text, line)?;
    let mut c = Cursor { toks: &toks, pos: 0, line, end_col: text.len() + 1 };
    let (l, lk) = c.expr()?;
    let rel = c.relation()?;
    let (r, rk) = c.expr()?;
    c.done()?;
    let mut lhs = l;
    lhs.add_scaled(&r, &Int::from(-1));
    Ok(LinConstraint::new(lhs, rel, rk - lk))
}

/// Parses one constraint such as `2*x - y <= 3` or `x < y + 1`.
pub fn parse_constraint(text: &str) -> Result<LinConstraint, ParseError> {
    parse_constraint_line(text, 1)
}

/// Parses a linear expression; constants are rejected.
pub fn parse_expr(text: &str) -> Result<LinExpr, ParseError> {
    let toks = tokenize(text, 1)?;
    let mut c = Cursor { toks: &toks, pos: 0, line: 1, end_col: text.len() + 1 };
    let (e, k) = c.expr()?;
    c.done()?;
    if k != Int::from(0) {
        return Err(ParseError::Syntax { line: 1, col: 1, message: "constant term in expression".into() });
    }
    Ok(e)
}

fn parse_bound(tok: &str, line: usize, col: usize) -> Result<Option<Int>, ParseError> {
    match tok {
        "-inf" | "inf" | "+inf" => Ok(None),
        _ => Int::from_str(tok)
            .map(Some)
            .map_err(|_| ParseError::Syntax { line, col, message: format!("bad bound `{tok}`") }),
    }
}

fn parse_atom(text: &str, line: usize) -> Result<InterfaceAtom, ParseError> {
    let toks = tokenize(text, line)?;
    let mut c = Cursor { toks: &toks, pos: 0, line, end_col: text.len() + 1 };
    let mut atom = if c.eat("(") {
        let x = c.ident()?;
        c.expect("=")?;
        let y = c.ident()?;
        c.expect(")")?;
        InterfaceAtom::eq_atom(x.as_str(), y.as_str())
    } else {
        let r = c.ident()?;
        c.expect("=")?;
        let f = c.ident()?;
        c.expect("(")?;
        let mut args = Vec::new();
        if !c.eat(")") {
            loop {
                args.push(VarId::new(&c.ident()?));
                if c.eat(")") {
                    break;
                }
                c.expect(",")?;
            }
        }
        InterfaceAtom::fun_def(r.as_str(), &f, args)
    };
    if c.eat("@") {
        atom = atom.annotated(c.ident()?.as_str());
    }
    c.done()?;
    Ok(atom)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Vars,
    Funs,
    Objective,
    Constraints,
    Atoms,
}

/// Parses a native instance and validates it.
pub fn parse_native(text: &str) -> Result<ImtInstance, ParseError> {
    let mut inst = ImtInstance::new();
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            section = match body {
                "[vars]" => Section::Vars,
                "[funs]" => Section::Funs,
                "[objective]" => Section::Objective,
                "[constraints]" => Section::Constraints,
                "[atoms]" => Section::Atoms,
                _ => {
                    return Err(ParseError::Syntax { line, col: 1, message: format!("unknown section {body}") })
                }
            };
            continue;
        }
        let syntax = |message: &str| ParseError::Syntax { line, col: 1, message: message.to_string() };
        match section {
            Section::None => return Err(syntax("content before the first section")),
            Section::Vars => {
                let parts: Vec<&str> = body.split_whitespace().collect();
                let [name, sort, rest @ ..] = parts.as_slice() else {
                    return Err(syntax("expected `name int [lo hi]`"));
                };
                if *sort != "int" {
                    return Err(ParseError::Sort { line, message: format!("unsupported sort `{sort}`") });
                }
                let bounds = match rest {
                    [] => VarBounds::new(None, None),
                    [lo, hi] => VarBounds::new(parse_bound(lo, line, 1)?, parse_bound(hi, line, 1)?),
                    _ => return Err(syntax("expected two bounds")),
                };
                inst.add_var(VarId::new(name), bounds);
            }
            Section::Funs => {
                let parts: Vec<&str> = body.split_whitespace().collect();
                let [name, arity] = parts.as_slice() else {
                    return Err(syntax("expected `name arity`"));
                };
                let arity: usize = arity.parse().map_err(|_| syntax("bad arity"))?;
                inst.add_fun(name, arity);
            }
            Section::Objective => {
                let Some(rest) = body.strip_prefix("min") else {
                    return Err(syntax("expected `min <expr>`"));
                };
                let toks = tokenize(rest, line)?;
                let mut c = Cursor { toks: &toks, pos: 0, line, end_col: rest.len() + 1 };
                let (e, k) = c.expr()?;
                c.done()?;
                if k != Int::from(0) {
                    return Err(syntax("constant term in objective"));
                }
                inst.objective = e;
            }
            Section::Constraints => inst.add_constraint(parse_constraint_line(body, line)?),
            Section::Atoms => inst.add_atom(parse_atom(body, line)?),
        }
    }
    inst.validate()?;
    Ok(inst)
}

fn bound_text(b: &Option<Int>, neg: bool) -> String {
    match b {
        Some(x) => x.to_string(),
        None if neg => "-inf".to_string(),
        None => "inf".to_string(),
    }
}

/// Canonical native rendering; `parse_native` inverts it.
pub fn print_native(inst: &ImtInstance) -> String {
    let mut s = String::new();
    s.push_str("[vars]\n");
    for v in &inst.vars {
        let b = inst.bounds.get(v);
        let _ = writeln!(s, "{v} int {} {}", bound_text(&b.lo, true), bound_text(&b.hi, false));
    }
    if !inst.funs.is_empty() {
        s.push_str("[funs]\n");
        for (f, n) in &inst.funs {
            let _ = writeln!(s, "{f} {n}");
        }
    }
    s.push_str("[objective]\n");
    let _ = writeln!(s, "min {}", inst.objective);
    s.push_str("[constraints]\n");
    for c in &inst.constraints {
        let _ = writeln!(s, "{c}");
    }
    if !inst.atoms.is_empty() {
        s.push_str("[atoms]\n");
        for a in &inst.atoms {
            let _ = writeln!(s, "{a}");
        }
    }
    s
}
