//! Interval propagation with Chvátal–Gomory certificates.
//!
//! Each tightened bound is one rounding step: a row plus the opposite bounds of
//! its other variables, scaled by the inverse coefficient. Later steps may use
//! bounds derived by earlier ones, so proofs are multi-round.

use num_traits::{One, Signed};
use std::collections::{BTreeMap, BTreeSet};

use crate::cert::{CgProof, Combination, EqualityProof};
use crate::model::{
    lower_bound_constraint, upper_bound_constraint, Bounds, LinConstraint, LinExpr, Relation,
    SimpleEquality, Subproblem, VarId,
};
use crate::num::{ceil, Int, Rat};

#[derive(Clone, Debug)]
pub enum Propagation {
    /// The subproblem has no integer point.
    Infeasible(CgProof),
    /// Simple equalities implied by the subproblem and not yet recorded in it.
    Implied(Vec<(SimpleEquality, EqualityProof)>),
}

/// `factor * row` yields `x >= value` (lower side) or `-x >= -value` (upper side).
#[derive(Clone, Debug)]
struct Fact {
    row: LinConstraint,
    factor: Rat,
    value: Int,
    step: Option<usize>,
}

struct Steps {
    combos: Vec<Combination>,
    deps: Vec<Vec<usize>>,
}

impl Steps {
    fn push(&mut self, combo: Combination, deps: Vec<usize>) -> (usize, LinConstraint) {
        let derived = combo.round().expect("propagation step rounds");
        self.combos.push(combo);
        self.deps.push(deps);
        (self.combos.len() - 1, derived)
    }

    fn proof(&self, roots: &[usize]) -> CgProof {
        let mut keep = BTreeSet::new();
        let mut stack: Vec<usize> = roots.to_vec();
        while let Some(i) = stack.pop() {
            if keep.insert(i) {
                stack.extend(self.deps[i].iter().copied());
            }
        }
        CgProof {
            steps: keep.into_iter().map(|i| self.combos[i].clone()).collect(),
        }
    }
}

/// Scales `(expr >= rhs)` forms of a normalized row: `(expr, rhs, multiplier sign)`.
fn ge_views(row: &LinConstraint) -> Vec<(LinExpr, Int, Rat)> {
    match row.rel {
        Relation::Ge => vec![(row.lhs.clone(), row.rhs.clone(), Rat::one())],
        Relation::Le => vec![(row.lhs.negated(), -row.rhs.clone(), Rat::one())],
        Relation::Eq => vec![
            (row.lhs.clone(), row.rhs.clone(), Rat::one()),
            (row.lhs.negated(), -row.rhs.clone(), -Rat::one()),
        ],
        Relation::Lt | Relation::Gt => unreachable!("normalized"),
    }
}

/// Tightens variable bounds by sweeping the rows of `sub` at most `max_sweeps`
/// times, reporting either a refutation or the newly implied fixings and
/// differences.
pub fn propagate_bounds(sub: &Subproblem, bounds: &Bounds, max_sweeps: usize) -> Propagation {
    let rows: Vec<LinConstraint> = sub.rows().into_iter().map(|r| r.normalize()).collect();
    let mut lo: BTreeMap<VarId, Fact> = BTreeMap::new();
    let mut hi: BTreeMap<VarId, Fact> = BTreeMap::new();
    for (v, b) in bounds.iter() {
        if let Some(l) = &b.lo {
            lo.insert(
                v.clone(),
                Fact { row: lower_bound_constraint(v, l), factor: Rat::one(), value: l.clone(), step: None },
            );
        }
        if let Some(h) = &b.hi {
            hi.insert(
                v.clone(),
                Fact { row: upper_bound_constraint(v, h), factor: Rat::one(), value: h.clone(), step: None },
            );
        }
    }
    let mut steps = Steps { combos: Vec::new(), deps: Vec::new() };
    let mut pair_lo: BTreeMap<(VarId, VarId), (Int, usize)> = BTreeMap::new();
    let mut pair_hi: BTreeMap<(VarId, VarId), (Int, usize)> = BTreeMap::new();

    for sweep in 0..max_sweeps.max(1) {
        let mut changed = false;
        for row in &rows {
            for (expr, rhs, sign) in ge_views(row) {
                // Difference rows: +-a (x - y) >= r.
                if sweep == 0 && expr.len() == 2 {
                    let mut it = expr.iter();
                    let (x, a) = it.next().unwrap();
                    let (y, b) = it.next().unwrap();
                    if a == &-b.clone() {
                        let mut combo = Combination::new();
                        combo.push(row.clone(), &sign / Rat::from_integer(a.abs()));
                        let (i, derived) = steps.push(combo, vec![]);
                        let key = (x.clone(), y.clone());
                        let k = derived.rhs.clone();
                        if a.is_positive() {
                            if pair_lo.get(&key).map_or(true, |(old, _)| k > *old) {
                                pair_lo.insert(key, (k, i));
                            }
                        } else {
                            let k = -k;
                            if pair_hi.get(&key).map_or(true, |(old, _)| k < *old) {
                                pair_hi.insert(key, (k, i));
                            }
                        }
                    }
                }

                for (xj, aj) in expr.iter() {
                    // aj*xj >= rhs - sum_{k != j} max(ak*xk)
                    let mut combo = Combination::new();
                    combo.push(row.clone(), sign.clone());
                    let mut bound = Rat::from_integer(rhs.clone());
                    let mut deps = Vec::new();
                    let mut ok = true;
                    for (xk, ak) in expr.iter() {
                        if xk == xj {
                            continue;
                        }
                        let fact = if ak.is_positive() { hi.get(xk) } else { lo.get(xk) };
                        let Some(f) = fact else {
                            ok = false;
                            break;
                        };
                        combo.push(f.row.clone(), &f.factor * Rat::from_integer(ak.abs()));
                        bound -= Rat::from_integer(ak * &f.value);
                        deps.extend(f.step);
                    }
                    if !ok {
                        continue;
                    }
                    let scale = Rat::one() / Rat::from_integer(aj.abs());
                    let k = ceil(&(&bound * &scale));
                    let improves = if aj.is_positive() {
                        lo.get(xj).map_or(true, |f| k > f.value)
                    } else {
                        hi.get(xj).map_or(true, |f| -&k < f.value)
                    };
                    if !improves {
                        continue;
                    }
                    let mut scaled = Combination::new();
                    for m in &combo.terms {
                        scaled.push(m.row.clone(), &m.factor * &scale);
                    }
                    let (i, derived) = steps.push(scaled, deps);
                    let fact = Fact { row: derived, factor: Rat::one(), value: k.clone(), step: Some(i) };
                    if aj.is_positive() {
                        lo.insert(xj.clone(), fact);
                    } else {
                        hi.insert(xj.clone(), Fact { value: -k, ..fact });
                    }
                    changed = true;
                    if let (Some(l), Some(h)) = (lo.get(xj), hi.get(xj)) {
                        if l.value > h.value {
                            let mut combo = Combination::new();
                            combo.push(l.row.clone(), l.factor.clone());
                            combo.push(h.row.clone(), h.factor.clone());
                            let deps: Vec<usize> = l.step.into_iter().chain(h.step).collect();
                            let (i, _) = steps.push(combo, deps);
                            return Propagation::Infeasible(steps.proof(&[i]));
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let in_c = |c: &LinConstraint| sub.constraints.contains(&c.normalize());
    let mut found = Vec::new();
    for (v, l) in &lo {
        let Some(h) = hi.get(v) else { continue };
        if l.value != h.value {
            continue;
        }
        let eq = SimpleEquality::fix(v.clone(), l.value.clone());
        if sub.equalities.contains(&eq) || in_c(&eq.to_constraint()) {
            continue;
        }
        let side = |f: &Fact| -> CgProof {
            match f.step {
                Some(i) => steps.proof(&[i]),
                None => {
                    let mut c = Combination::new();
                    c.push(f.row.clone(), f.factor.clone());
                    CgProof::single(c)
                }
            }
        };
        found.push((eq, EqualityProof { lower: side(l), upper: side(h) }));
    }
    for (key, (l, li)) in &pair_lo {
        let Some((h, hi_step)) = pair_hi.get(key) else { continue };
        if l != h {
            continue;
        }
        let Ok(eq) = SimpleEquality::diff(key.0.clone(), key.1.clone(), l.clone()) else {
            continue;
        };
        if sub.equalities.contains(&eq) || in_c(&eq.to_constraint()) {
            continue;
        }
        found.push((eq, EqualityProof { lower: steps.proof(&[*li]), upper: steps.proof(&[*hi_step]) }));
    }
    Propagation::Implied(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SubproblemId, VarBounds};

    fn c(s: &str) -> LinConstraint {
        s.parse().unwrap()
    }

    fn sub(rows: &[&str]) -> Subproblem {
        Subproblem::new(SubproblemId(0), rows.iter().map(|r| c(r)), [])
    }

    fn boxed(names: &[&str], lo: i64, hi: i64) -> Bounds {
        let mut b = Bounds::new();
        for n in names {
            b.set(VarId::new(n), VarBounds::closed(lo, hi));
        }
        b
    }

    fn available<'a>(s: &'a Subproblem, b: &'a Bounds) -> impl Fn(&LinConstraint) -> bool + 'a {
        let rows: Vec<LinConstraint> = s.rows().into_iter().chain(b.as_constraints()).collect();
        move |r: &LinConstraint| rows.contains(&r.normalize())
    }

    #[test]
    fn fixes_a_variable_and_certifies_it() {
        let s = sub(&["x + y >= 9"]);
        let b = boxed(&["x", "y"], 0, 5);
        let Propagation::Implied(found) = propagate_bounds(&s, &b, 8) else {
            panic!("feasible");
        };
        assert!(found.is_empty());

        let s = sub(&["x + y >= 10"]);
        let Propagation::Implied(found) = propagate_bounds(&s, &b, 8) else {
            panic!("feasible");
        };
        assert_eq!(found.len(), 2);
        for (eq, proof) in &found {
            assert!(matches!(eq, SimpleEquality::Fix { value, .. } if value == &Int::from(5)));
            proof.verify(&eq.to_constraint(), &available(&s, &b)).unwrap();
        }
    }

    #[test]
    fn detects_infeasibility_through_rounding() {
        // 2x = 1 has rational but no integer solutions.
        let s = sub(&["2*x = 1"]);
        let b = boxed(&["x"], -3, 3);
        let Propagation::Infeasible(proof) = propagate_bounds(&s, &b, 8) else {
            panic!("expected refutation");
        };
        proof.verify_refutation(&available(&s, &b)).unwrap();
    }

    #[test]
    fn chained_bounds_use_multi_round_proofs() {
        let s = sub(&["x - y >= 1", "y - z >= 1", "z >= 3", "x <= 4"]);
        let b = boxed(&["x", "y", "z"], -10, 10);
        let Propagation::Infeasible(proof) = propagate_bounds(&s, &b, 8) else {
            panic!("expected refutation");
        };
        assert!(proof.steps.len() > 1);
        proof.verify_refutation(&available(&s, &b)).unwrap();
    }

    #[test]
    fn difference_rows_give_diffs() {
        let s = sub(&["x - y >= 2", "y - x >= -2"]);
        let b = Bounds::new();
        let Propagation::Implied(found) = propagate_bounds(&s, &b, 4) else {
            panic!("feasible");
        };
        assert_eq!(found.len(), 1);
        let (eq, proof) = &found[0];
        assert_eq!(eq, &SimpleEquality::diff(VarId::new("x"), VarId::new("y"), Int::from(2)).unwrap());
        proof.verify(&eq.to_constraint(), &available(&s, &b)).unwrap();
    }

    #[test]
    fn does_not_repeat_recorded_equalities() {
        let mut s = sub(&["x + y >= 10"]);
        s.equalities.insert(SimpleEquality::fix(VarId::new("x"), Int::from(5)));
        let b = boxed(&["x", "y"], 0, 5);
        let Propagation::Implied(found) = propagate_bounds(&s, &b, 8) else {
            panic!("feasible");
        };
        assert_eq!(found.len(), 1);
        assert!(matches!(&found[0].0, SimpleEquality::Fix { var, .. } if var.name() == "y"));
    }

    #[test]
    fn unused_zero_bounds_do_not_fire() {
        let s = sub(&["0 >= -1"]);
        let b = Bounds::new();
        assert!(matches!(propagate_bounds(&s, &b, 2), Propagation::Implied(v) if v.is_empty()));
    }
}
