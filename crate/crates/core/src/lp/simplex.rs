//! Bounded-variable primal simplex over exact rationals.
//!
//! Multi-variable rows become slack columns `s_i = a_i . x`; single-variable
//! rows and variable bounds become column bounds. Every column bound remembers
//! the row (and scale) it came from, so Farkas, dual and Gomory certificates
//! can be stated over the original rows. Pivoting uses Bland's rule.

use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

use crate::cert::Combination;
use crate::model::{LinConstraint, LinExpr, Relation, VarId};
use crate::num::{frac, is_integral, Rat};

/// `factor * rows[row]` contributes `x_j >= value` (lower) or `-x_j >= -value` (upper).
#[derive(Clone, Debug)]
pub(crate) struct Fact {
    pub row: usize,
    pub factor: Rat,
    pub value: Rat,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal {
        point: BTreeMap<VarId, Rat>,
        value: Rat,
        dual: Combination,
    },
    Infeasible {
        farkas: Combination,
    },
    Unbounded {
        point: BTreeMap<VarId, Rat>,
        ray: BTreeMap<VarId, Rat>,
    },
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }
}

/// Simplex state at termination; enough to derive Gomory cuts.
#[derive(Clone, Debug)]
pub struct Tableau {
    pub(crate) rows: Vec<LinConstraint>,
    pub(crate) columns: Vec<VarId>,
    n_orig: usize,
    lower: Vec<Option<Fact>>,
    upper: Vec<Option<Fact>>,
    /// `basis[r]` is the column basic in tableau row `r`.
    basis: Vec<usize>,
    /// `x_{basis[r]} = sum_j table[r][j] * x_j` over nonbasic `j`.
    table: Vec<Vec<Rat>>,
    basic_row: Vec<Option<usize>>,
    values: Vec<Rat>,
    optimal: bool,
}

enum Setup {
    Ready(Tableau),
    Refuted(Combination),
}

impl Tableau {
    fn build(rows: Vec<LinConstraint>, objective: &LinExpr) -> Setup {
        let rows: Vec<LinConstraint> = rows.into_iter().map(|r| r.normalize()).collect();
        let mut vars: Vec<VarId> = rows
            .iter()
            .flat_map(|r| r.vars().cloned())
            .chain(objective.vars().cloned())
            .collect();
        vars.sort();
        vars.dedup();
        let index: BTreeMap<&VarId, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let n_orig = vars.len();

        let mut lower: Vec<Option<Fact>> = vec![None; n_orig];
        let mut upper: Vec<Option<Fact>> = vec![None; n_orig];
        let mut slack_rows: Vec<usize> = Vec::new();

        for (i, row) in rows.iter().enumerate() {
            match row.lhs.len() {
                0 => {
                    let b = &row.rhs;
                    let refuted = match row.rel {
                        Relation::Ge => b.is_positive().then(Rat::one),
                        Relation::Le => b.is_negative().then(Rat::one),
                        Relation::Eq if b.is_positive() => Some(Rat::one()),
                        Relation::Eq if b.is_negative() => Some(-Rat::one()),
                        _ => None,
                    };
                    if let Some(k) = refuted {
                        let mut farkas = Combination::new();
                        farkas.push(row.clone(), k);
                        return Setup::Refuted(farkas);
                    }
                }
                1 => {
                    let (v, a) = row.lhs.iter().next().unwrap();
                    let j = index[v];
                    let a = Rat::from_integer(a.clone());
                    let value = Rat::from_integer(row.rhs.clone()) / &a;
                    let inv_abs = Rat::one() / a.abs();
                    let (lo_factor, hi_factor) = match row.rel {
                        Relation::Ge if a.is_positive() => (Some(inv_abs), None),
                        Relation::Ge => (None, Some(inv_abs)),
                        Relation::Le if a.is_negative() => (Some(inv_abs), None),
                        Relation::Le => (None, Some(inv_abs)),
                        Relation::Eq => (Some(Rat::one() / &a), Some(-Rat::one() / &a)),
                        Relation::Lt | Relation::Gt => unreachable!("normalized"),
                    };
                    if let Some(factor) = lo_factor {
                        tighten(&mut lower[j], Fact { row: i, factor, value: value.clone() }, true);
                    }
                    if let Some(factor) = hi_factor {
                        tighten(&mut upper[j], Fact { row: i, factor, value }, false);
                    }
                }
                _ => slack_rows.push(i),
            }
        }

        let n_cols = n_orig + slack_rows.len();
        let mut columns = vars.clone();
        let mut table = Vec::with_capacity(slack_rows.len());
        let mut basis = Vec::with_capacity(slack_rows.len());
        for (k, &i) in slack_rows.iter().enumerate() {
            let row = &rows[i];
            let col = n_orig + k;
            columns.push(VarId::new(&format!("_s{i}")));
            let b = Rat::from_integer(row.rhs.clone());
            let lo = matches!(row.rel, Relation::Ge | Relation::Eq).then(|| Fact {
                row: i,
                factor: Rat::one(),
                value: b.clone(),
            });
            let hi = match row.rel {
                Relation::Le => Some(Fact { row: i, factor: Rat::one(), value: b.clone() }),
                Relation::Eq => Some(Fact { row: i, factor: -Rat::one(), value: b.clone() }),
                _ => None,
            };
            lower.push(lo);
            upper.push(hi);
            let mut t = vec![Rat::zero(); n_cols];
            for (v, a) in row.lhs.iter() {
                t[index[v]] = Rat::from_integer(a.clone());
            }
            table.push(t);
            basis.push(col);
        }

        let mut basic_row = vec![None; n_cols];
        for (r, &b) in basis.iter().enumerate() {
            basic_row[b] = Some(r);
        }

        let mut values = vec![Rat::zero(); n_cols];
        for j in 0..n_orig {
            if let Some(l) = &lower[j] {
                if l.value.is_positive() {
                    values[j] = l.value.clone();
                }
            }
            if let Some(u) = &upper[j] {
                if u.value.is_negative() {
                    values[j] = u.value.clone();
                }
            }
        }
        let mut t = Tableau {
            rows,
            columns,
            n_orig,
            lower,
            upper,
            basis,
            table,
            basic_row,
            values,
            optimal: false,
        };
        for r in 0..t.basis.len() {
            let v = t.row_value(r);
            let b = t.basis[r];
            t.values[b] = v;
        }
        for j in 0..n_cols {
            if let (Some(l), Some(u)) = (&t.lower[j], &t.upper[j]) {
                if l.value > u.value {
                    let mut farkas = Combination::new();
                    t.add_fact(&mut farkas, l, &Rat::one());
                    t.add_fact(&mut farkas, u, &Rat::one());
                    return Setup::Refuted(farkas);
                }
            }
        }
        Setup::Ready(t)
    }

    fn row_value(&self, r: usize) -> Rat {
        let mut acc = Rat::zero();
        for (j, a) in self.table[r].iter().enumerate() {
            if !a.is_zero() {
                acc += a * &self.values[j];
            }
        }
        acc
    }

    fn add_fact(&self, comb: &mut Combination, fact: &Fact, mult: &Rat) {
        comb.push(self.rows[fact.row].clone(), &fact.factor * mult);
    }

    fn below_lower(&self, j: usize) -> bool {
        self.lower[j].as_ref().is_some_and(|l| self.values[j] < l.value)
    }

    fn above_upper(&self, j: usize) -> bool {
        self.upper[j].as_ref().is_some_and(|u| self.values[j] > u.value)
    }

    fn can_increase(&self, j: usize) -> bool {
        self.upper[j].as_ref().map_or(true, |u| self.values[j] < u.value)
    }

    fn can_decrease(&self, j: usize) -> bool {
        self.lower[j].as_ref().map_or(true, |l| self.values[j] > l.value)
    }

    /// Exchanges basic `basis[r]` with nonbasic column `j`.
    fn pivot(&mut self, r: usize, j: usize) {
        let leaving = self.basis[r];
        let a = self.table[r][j].clone();
        debug_assert!(!a.is_zero());
        let inv = Rat::one() / &a;
        let mut new_row: Vec<Rat> = self.table[r].iter().map(|x| -(x * &inv)).collect();
        new_row[j] = Rat::zero();
        new_row[leaving] = inv;
        let nz: Vec<usize> = (0..new_row.len()).filter(|&k| !new_row[k].is_zero()).collect();
        for (r2, row) in self.table.iter_mut().enumerate() {
            if r2 == r || row[j].is_zero() {
                continue;
            }
            let coef = std::mem::replace(&mut row[j], Rat::zero());
            for &k in &nz {
                row[k] += &coef * &new_row[k];
            }
        }
        self.table[r] = new_row;
        self.basis[r] = j;
        self.basic_row[j] = Some(r);
        self.basic_row[leaving] = None;
    }

    /// Moves nonbasic `j` by `delta`, updating the basic values.
    fn shift(&mut self, j: usize, delta: &Rat) {
        if delta.is_zero() {
            return;
        }
        self.values[j] += delta;
        for r in 0..self.basis.len() {
            let a = &self.table[r][j];
            if !a.is_zero() {
                let b = self.basis[r];
                let d = a * delta;
                self.values[b] += d;
            }
        }
    }

    /// Finds a point within all column bounds, or a Farkas refutation.
    fn make_feasible(&mut self) -> Result<(), Combination> {
        loop {
            let violated = (0..self.basis.len())
                .filter(|&r| {
                    let b = self.basis[r];
                    self.below_lower(b) || self.above_upper(b)
                })
                .min_by_key(|&r| self.basis[r]);
            let Some(r) = violated else {
                return Ok(());
            };
            let b = self.basis[r];
            let raise = self.below_lower(b);
            let entering = (0..self.values.len())
                .filter(|&j| self.basic_row[j].is_none())
                .find(|&j| {
                    let a = &self.table[r][j];
                    if a.is_zero() {
                        return false;
                    }
                    match (raise, a.is_positive()) {
                        (true, true) | (false, false) => self.can_increase(j),
                        (true, false) | (false, true) => self.can_decrease(j),
                    }
                });
            match entering {
                Some(j) => {
                    let target = if raise {
                        self.lower[b].as_ref().unwrap().value.clone()
                    } else {
                        self.upper[b].as_ref().unwrap().value.clone()
                    };
                    let theta = (&target - &self.values[b]) / &self.table[r][j];
                    self.shift(j, &theta);
                    self.values[b] = target;
                    self.pivot(r, j);
                }
                None => return Err(self.row_conflict(r, raise)),
            }
        }
    }

    fn row_conflict(&self, r: usize, raise: bool) -> Combination {
        let b = self.basis[r];
        let mut farkas = Combination::new();
        let own = if raise { &self.lower[b] } else { &self.upper[b] };
        self.add_fact(&mut farkas, own.as_ref().unwrap(), &Rat::one());
        for (j, a) in self.table[r].iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let use_upper = raise == a.is_positive();
            let fact = if use_upper { &self.upper[j] } else { &self.lower[j] };
            self.add_fact(&mut farkas, fact.as_ref().unwrap(), &a.abs());
        }
        farkas
    }

    fn reduced_costs(&self, cost: &[Rat]) -> Vec<Rat> {
        let mut d: Vec<Rat> = (0..self.values.len())
            .map(|j| {
                if self.basic_row[j].is_none() {
                    cost[j].clone()
                } else {
                    Rat::zero()
                }
            })
            .collect();
        for (r, &b) in self.basis.iter().enumerate() {
            if cost[b].is_zero() {
                continue;
            }
            for (j, a) in self.table[r].iter().enumerate() {
                if !a.is_zero() {
                    d[j] += &cost[b] * a;
                }
            }
        }
        d
    }

    fn optimize(&mut self, objective: &LinExpr) -> LpOutcome {
        let mut cost = vec![Rat::zero(); self.values.len()];
        for (j, v) in self.columns[..self.n_orig].iter().enumerate() {
            cost[j] = Rat::from_integer(objective.coeff(v));
        }
        loop {
            let d = self.reduced_costs(&cost);
            let entering = (0..self.values.len()).find(|&j| {
                self.basic_row[j].is_none()
                    && ((d[j].is_negative() && self.can_increase(j))
                        || (d[j].is_positive() && self.can_decrease(j)))
            });
            let Some(j) = entering else {
                return self.optimal_outcome(&cost, &d);
            };
            let up = d[j].is_negative();
            let dir = if up { Rat::one() } else { -Rat::one() };

            // Ratio test; the entering column's own bound wins ties.
            let mut best: Option<(Rat, Option<usize>)> = if up {
                self.upper[j].as_ref().map(|u| (&u.value - &self.values[j], None))
            } else {
                self.lower[j].as_ref().map(|l| (&self.values[j] - &l.value, None))
            };
            let mut rows_by_col: Vec<usize> = (0..self.basis.len()).collect();
            rows_by_col.sort_by_key(|&r| self.basis[r]);
            for r in rows_by_col {
                let rate = &self.table[r][j] * &dir;
                if rate.is_zero() {
                    continue;
                }
                let b = self.basis[r];
                let limit = if rate.is_positive() {
                    self.upper[b].as_ref().map(|u| (&u.value - &self.values[b]) / &rate)
                } else {
                    self.lower[b].as_ref().map(|l| (&self.values[b] - &l.value) / -&rate)
                };
                if let Some(t) = limit {
                    if best.as_ref().map_or(true, |(bt, _)| t < *bt) {
                        best = Some((t, Some(r)));
                    }
                }
            }
            match best {
                None => return self.unbounded_outcome(j, &dir),
                Some((t, None)) => {
                    self.shift(j, &(&t * &dir));
                }
                Some((t, Some(r))) => {
                    let b = self.basis[r];
                    let rate = &self.table[r][j] * &dir;
                    self.shift(j, &(&t * &dir));
                    let snapped = if rate.is_positive() {
                        self.upper[b].as_ref().unwrap().value.clone()
                    } else {
                        self.lower[b].as_ref().unwrap().value.clone()
                    };
                    self.values[b] = snapped;
                    self.pivot(r, j);
                }
            }
        }
    }

    fn point(&self) -> BTreeMap<VarId, Rat> {
        self.columns[..self.n_orig]
            .iter()
            .cloned()
            .zip(self.values[..self.n_orig].iter().cloned())
            .collect()
    }

    fn optimal_outcome(&mut self, cost: &[Rat], d: &[Rat]) -> LpOutcome {
        self.optimal = true;
        let value: Rat = (0..self.n_orig).map(|j| &cost[j] * &self.values[j]).sum();
        let mut dual = Combination::new();
        for (j, dj) in d.iter().enumerate() {
            if self.basic_row[j].is_some() || dj.is_zero() {
                continue;
            }
            let fact = if dj.is_positive() { &self.lower[j] } else { &self.upper[j] };
            self.add_fact(&mut dual, fact.as_ref().expect("nonbasic at bound"), &dj.abs());
        }
        LpOutcome::Optimal {
            point: self.point(),
            value,
            dual,
        }
    }

    fn unbounded_outcome(&self, j: usize, dir: &Rat) -> LpOutcome {
        let mut ray = vec![Rat::zero(); self.values.len()];
        ray[j] = dir.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            ray[b] = &self.table[r][j] * dir;
        }
        LpOutcome::Unbounded {
            point: self.point(),
            ray: self.columns[..self.n_orig]
                .iter()
                .cloned()
                .zip(ray.into_iter().take(self.n_orig))
                .filter(|(_, r)| !r.is_zero())
                .collect(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.optimal
    }

    /// Current values of the structural variables.
    pub fn solution(&self) -> BTreeMap<VarId, Rat> {
        self.point()
    }

    fn at_lower(&self, j: usize) -> bool {
        self.lower[j].as_ref().is_some_and(|l| l.value == self.values[j])
    }

    fn at_upper(&self, j: usize) -> bool {
        self.upper[j].as_ref().is_some_and(|u| u.value == self.values[j])
    }

    /// Chvátal–Gomory combination for a fractional structural column, if one
    /// can be read off its tableau row.
    pub(crate) fn gomory_combination(&self, j: usize) -> Option<Combination> {
        let mut comb = Combination::new();
        match self.basic_row[j] {
            None => {
                // Nonbasic at a fractional bound: round the bound itself.
                if self.at_lower(j) {
                    self.add_fact(&mut comb, self.lower[j].as_ref()?, &Rat::one());
                } else if self.at_upper(j) {
                    self.add_fact(&mut comb, self.upper[j].as_ref()?, &Rat::one());
                } else {
                    return None;
                }
            }
            Some(r) => {
                // x_j = beta + sum gamma_k s_k with s_k >= 0 the distance of
                // nonbasic k from its active bound; frac(-gamma_k) multiplies
                // the bound fact `s_k >= 0`.
                for (k, a) in self.table[r].iter().enumerate() {
                    if a.is_zero() {
                        continue;
                    }
                    if is_integral(a) {
                        continue;
                    }
                    let (gamma, fact) = if self.at_lower(k) {
                        (a.clone(), self.lower[k].as_ref().unwrap())
                    } else if self.at_upper(k) {
                        (-a.clone(), self.upper[k].as_ref().unwrap())
                    } else {
                        return None;
                    };
                    let f = frac(&-gamma);
                    if !f.is_zero() {
                        self.add_fact(&mut comb, fact, &f);
                    }
                }
            }
        }
        Some(comb)
    }

    pub(crate) fn structural(&self) -> impl Iterator<Item = (usize, &VarId, &Rat)> {
        self.columns[..self.n_orig]
            .iter()
            .zip(&self.values[..self.n_orig])
            .enumerate()
            .map(|(j, (v, x))| (j, v, x))
    }
}

fn tighten(slot: &mut Option<Fact>, fact: Fact, is_lower: bool) {
    let better = match slot {
        None => true,
        Some(old) if is_lower => fact.value > old.value,
        Some(old) => fact.value < old.value,
    };
    if better {
        *slot = Some(fact);
    }
}

/// Minimizes `objective` over the rational relaxation of `rows`.
pub fn solve_rows(rows: Vec<LinConstraint>, objective: &LinExpr) -> (LpOutcome, Option<Tableau>) {
    match Tableau::build(rows, objective) {
        Setup::Refuted(farkas) => (LpOutcome::Infeasible { farkas }, None),
        Setup::Ready(mut t) => {
            if let Err(farkas) = t.make_feasible() {
                return (LpOutcome::Infeasible { farkas }, Some(t));
            }
            let out = t.optimize(objective);
            (out, Some(t))
        }
    }
}
