//! Exhaustive enumeration, independent of the LP and theory machinery.
//!
//! Variables are assigned in name order with values ascending, so the first
//! optimum met is the lexicographically smallest one. Partial assignments are
//! cut off when some row can no longer be met over the remaining box, or when
//! the objective cannot improve on the best point so far. Theory atoms are
//! checked on complete points by table lookup.

use num_traits::ToPrimitive;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

use crate::engine::SolveStatus;
use crate::model::{Assignment, AtomKind, Bounds, ImtInstance, VarId};
use crate::num::Int;

pub const DEFAULT_NODE_CAP: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("enumeration exceeded {0} nodes")]
    BoxTooLarge(u64),
    #[error("variable `{0}` has no finite range in the box")]
    Unbounded(VarId),
    #[error("coefficients or bounds exceed the machine range")]
    Overflow,
}

struct Row {
    terms: Vec<(usize, i128)>,
    /// `sum >= rhs`
    rhs: i128,
}

enum Atom {
    Eq { left: usize, right: usize, ann: Option<usize> },
    Fun { result: usize, fun: usize, args: Vec<usize>, ann: Option<usize> },
}

struct Search<'a> {
    lo: Vec<i128>,
    hi: Vec<i128>,
    rows: Vec<Row>,
    by_var: Vec<Vec<usize>>,
    obj: Vec<i128>,
    atoms: &'a [Atom],
    value: Vec<i128>,
    best: Option<(i128, Vec<i128>)>,
    nodes: u64,
    cap: u64,
}

fn small(x: &Int) -> Result<i128, OracleError> {
    x.to_i128().filter(|v| v.abs() < (1i128 << 80)).ok_or(OracleError::Overflow)
}

impl Search<'_> {
    /// Largest value of a row's sum with variables from `depth` on still free.
    fn row_max(&self, r: &Row, depth: usize) -> i128 {
        r.terms
            .iter()
            .map(|&(i, c)| {
                let x = if i < depth { self.value[i] } else if c > 0 { self.hi[i] } else { self.lo[i] };
                c * x
            })
            .sum()
    }

    fn obj_min(&self, depth: usize) -> i128 {
        self.obj
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let x = if i < depth { self.value[i] } else if c > 0 { self.lo[i] } else { self.hi[i] };
                c * x
            })
            .sum()
    }

    fn consistent(&self) -> bool {
        let mut table: HashMap<(usize, Vec<i128>), i128> = HashMap::new();
        let mut forbidden = Vec::new();
        for a in self.atoms {
            let holds = |ann: &Option<usize>| ann.map_or(true, |v| self.value[v] > 0);
            match a {
                Atom::Eq { left, right, ann } => {
                    if (self.value[*left] == self.value[*right]) != holds(ann) {
                        return false;
                    }
                }
                Atom::Fun { result, fun, args, ann } => {
                    let key = (*fun, args.iter().map(|&i| self.value[i]).collect::<Vec<_>>());
                    let r = self.value[*result];
                    if holds(ann) {
                        if *table.entry(key).or_insert(r) != r {
                            return false;
                        }
                    } else {
                        forbidden.push((key, r));
                    }
                }
            }
        }
        forbidden.iter().all(|(k, r)| table.get(k) != Some(r))
    }

    fn run(&mut self, depth: usize) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(OracleError::BoxTooLarge(self.cap));
        }
        if let Some((best, _)) = &self.best {
            if self.obj_min(depth) >= *best {
                return Ok(());
            }
        }
        if depth == self.value.len() {
            if self.consistent() {
                self.best = Some((self.obj_min(depth), self.value.clone()));
            }
            return Ok(());
        }
        for x in self.lo[depth]..=self.hi[depth] {
            self.value[depth] = x;
            let ok = self.by_var[depth].iter().all(|&r| self.row_max(&self.rows[r], depth + 1) >= self.rows[r].rhs);
            if ok {
                self.run(depth + 1)?;
            }
        }
        Ok(())
    }
}

/// [`brute_force_solve_capped`] with [`DEFAULT_NODE_CAP`].
pub fn brute_force_solve(inst: &ImtInstance, bx: &Bounds) -> Result<SolveStatus, OracleError> {
    brute_force_solve_capped(inst, bx, DEFAULT_NODE_CAP)
}

/// Minimizes the objective over the integer points of `bx` (intersected with
/// the instance bounds) that satisfy every row and every theory atom.
pub fn brute_force_solve_capped(inst: &ImtInstance, bx: &Bounds, cap: u64) -> Result<SolveStatus, OracleError> {
    let vars: Vec<VarId> = inst.vars.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&VarId, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for v in &vars {
        let a = inst.bounds.get(v);
        let b = bx.get(v);
        let l = [a.lo, b.lo].into_iter().flatten().max().ok_or_else(|| OracleError::Unbounded(v.clone()))?;
        let h = [a.hi, b.hi].into_iter().flatten().min().ok_or_else(|| OracleError::Unbounded(v.clone()))?;
        lo.push(small(&l)?);
        hi.push(small(&h)?);
    }
    let mut rows = Vec::new();
    for c in &inst.constraints {
        for (e, rhs) in c.ge_forms() {
            let terms = e.iter().map(|(v, k)| Ok((index[v], small(k)?))).collect::<Result<Vec<_>, OracleError>>()?;
            rows.push(Row { terms, rhs: small(&rhs)? });
        }
    }
    // rows are rechecked whenever one of their variables is fixed
    let mut by_var = vec![Vec::new(); vars.len()];
    for (r, row) in rows.iter().enumerate() {
        let vs: BTreeSet<usize> = row.terms.iter().map(|t| t.0).collect();
        if vs.is_empty() {
            if row.rhs > 0 {
                return Ok(SolveStatus::Infeasible);
            }
            continue;
        }
        for v in vs {
            by_var[v].push(r);
        }
    }
    let mut obj = vec![0i128; vars.len()];
    for (v, c) in inst.objective.iter() {
        obj[index[v]] = small(c)?;
    }
    let mut funs: BTreeMap<&str, usize> = BTreeMap::new();
    let ann = |a: &Option<VarId>| a.as_ref().map(|v| index[v]);
    let atoms: Vec<Atom> = inst
        .atoms
        .iter()
        .map(|a| match &a.kind {
            AtomKind::EqAtom { left, right } => {
                Atom::Eq { left: index[left], right: index[right], ann: ann(&a.annotation) }
            }
            AtomKind::FunDef { result, fun, args } => {
                let n = funs.len();
                let fun = *funs.entry(fun).or_insert(n);
                Atom::Fun {
                    result: index[result],
                    fun,
                    args: args.iter().map(|x| index[x]).collect(),
                    ann: ann(&a.annotation),
                }
            }
        })
        .collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Ok(SolveStatus::Infeasible);
    }
    let mut s = Search {
        lo,
        hi,
        rows,
        by_var,
        obj,
        atoms: &atoms,
        value: vec![0; vars.len()],
        best: None,
        nodes: 0,
        cap,
    };
    s.run(0)?;
    Ok(match s.best {
        None => SolveStatus::Infeasible,
        Some((value, point)) => SolveStatus::Optimal {
            assignment: Assignment::from_pairs(vars.iter().cloned().zip(point.into_iter().map(Int::from))),
            value: Int::from(value),
        },
    })
}
