//! Linear relaxations: exact simplex, interval propagation and cutting planes.

pub mod propagate;
pub mod simplex;

use num_traits::Zero;
use std::collections::BTreeMap;

use crate::cert::{CgProof, LbDual};
use crate::model::{Bounds, LinConstraint, LinExpr, ObjValue, Subproblem, VarId};
use crate::num::{ceil, frac, Rat};

pub use propagate::{propagate_bounds, Propagation};
pub use simplex::{solve_rows, LpOutcome, Tableau};

/// The rows of the relaxation of `sub`: `C`, rendered `D`, and the variable bounds.
pub fn relaxation_rows(sub: &Subproblem, bounds: &Bounds) -> Vec<LinConstraint> {
    let mut rows = sub.rows();
    rows.extend(bounds.as_constraints());
    rows
}

/// Solves the rational relaxation of `sub` under `bounds`, minimizing `objective`.
pub fn lp_solve(sub: &Subproblem, objective: &LinExpr, bounds: &Bounds) -> (LpOutcome, Option<Tableau>) {
    solve_rows(relaxation_rows(sub, bounds), objective)
}

/// The certified integer lower bound carried by an LP outcome.
pub fn lower_bound(outcome: &LpOutcome) -> LbDual {
    match outcome {
        LpOutcome::Optimal { value, dual, .. } => LbDual {
            bound: ObjValue::Finite(ceil(value)),
            combination: dual.clone(),
        },
        LpOutcome::Infeasible { farkas } => LbDual {
            bound: ObjValue::PosInf,
            combination: farkas.clone(),
        },
        LpOutcome::Unbounded { .. } => LbDual {
            bound: ObjValue::NegInf,
            combination: Default::default(),
        },
    }
}

#[derive(Clone, Debug)]
pub struct GomoryCut {
    pub cut: LinConstraint,
    pub proof: CgProof,
    /// `rhs - lhs(x*)` at the relaxation optimum; positive for a violated cut.
    pub violation: Rat,
}

/// Gomory cuts from the rows of fractional integer variables, most violated
/// first, at most `cap` of them. Only cuts violated by the current point are kept.
pub fn derive_gomory_cuts(tableau: &Tableau, cap: usize) -> Vec<GomoryCut> {
    let point: BTreeMap<VarId, Rat> = tableau.solution();
    let mut cuts: Vec<GomoryCut> = Vec::new();
    for (j, _, x) in tableau.structural() {
        if frac(x).is_zero() {
            continue;
        }
        let Some(combo) = tableau.gomory_combination(j) else {
            continue;
        };
        let Ok(cut) = combo.round() else {
            continue;
        };
        let lhs = cut.lhs.eval_rat(&point);
        let violation = Rat::from_integer(cut.rhs.clone()) - lhs;
        if violation <= Rat::zero() || cuts.iter().any(|c| c.cut == cut) {
            continue;
        }
        cuts.push(GomoryCut {
            cut,
            proof: CgProof::single(combo),
            violation,
        });
    }
    cuts.sort_by(|a, b| b.violation.cmp(&a.violation));
    cuts.truncate(cap);
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SubproblemId, VarBounds};
    use crate::num::rat;

    fn c(s: &str) -> LinConstraint {
        s.parse().unwrap()
    }

    fn e(s: &str) -> LinExpr {
        c(&format!("{s} >= 0")).lhs
    }

    fn avail(rows: &[LinConstraint]) -> impl Fn(&LinConstraint) -> bool + '_ {
        move |r| rows.contains(&r.normalize())
    }

    #[test]
    fn optimum_with_dual_certificate() {
        let rows = vec![c("x + y >= 3"), c("x - y <= 1"), c("x >= 0"), c("y >= 0")];
        let (out, _) = solve_rows(rows.clone(), &e("2*x + 3*y"));
        let LpOutcome::Optimal { value, point, .. } = &out else {
            panic!("{out:?}")
        };
        assert_eq!(*value, rat(7, 1));
        assert_eq!(point[&VarId::new("x")], rat(2, 1));
        let lb = lower_bound(&out);
        assert_eq!(lb.bound, ObjValue::Finite(7.into()));
        lb.verify(&e("2*x + 3*y"), &avail(&rows)).unwrap();
    }

    #[test]
    fn fractional_optimum_rounds_up_bound() {
        let rows = vec![c("2*x >= 1")];
        let (out, _) = solve_rows(rows.clone(), &e("x"));
        let LpOutcome::Optimal { value, .. } = &out else { panic!() };
        assert_eq!(*value, rat(1, 2));
        let lb = lower_bound(&out);
        assert_eq!(lb.bound, ObjValue::Finite(1.into()));
        lb.verify(&e("x"), &avail(&rows)).unwrap();
    }

    #[test]
    fn infeasible_with_farkas() {
        let rows = vec![c("x + y >= 5"), c("x <= 2"), c("y <= 2")];
        let (out, _) = solve_rows(rows.clone(), &e("x"));
        let LpOutcome::Infeasible { farkas } = &out else { panic!("{out:?}") };
        farkas.verify_refutation(&avail(&rows)).unwrap();

        let rows = vec![c("x >= 3"), c("x <= 2")];
        let (out, _) = solve_rows(rows.clone(), &e("x"));
        let LpOutcome::Infeasible { farkas } = &out else { panic!("{out:?}") };
        farkas.verify_refutation(&avail(&rows)).unwrap();

        let rows = vec![c("0 >= 1")];
        let (out, _) = solve_rows(rows.clone(), &e("x"));
        let LpOutcome::Infeasible { farkas } = &out else { panic!("{out:?}") };
        farkas.verify_refutation(&avail(&rows)).unwrap();
    }

    #[test]
    fn unbounded_ray() {
        let rows = vec![c("x - y <= 1"), c("y >= 0")];
        let (out, _) = solve_rows(rows.clone(), &e("-x - y"));
        let LpOutcome::Unbounded { ray, .. } = &out else { panic!("{out:?}") };
        let obj: Rat = ray.iter().map(|(v, r)| Rat::from_integer(e("-x - y").coeff(v)) * r).sum();
        assert!(obj < Rat::zero());
        for row in &rows {
            let d = row.lhs.eval_rat(ray);
            match row.rel {
                crate::model::Relation::Le => assert!(d <= Rat::zero()),
                crate::model::Relation::Ge => assert!(d >= Rat::zero()),
                _ => {}
            }
        }
    }

    #[test]
    fn equality_rows() {
        let rows = vec![c("x + y = 4"), c("x - y = 1")];
        let (out, _) = solve_rows(rows.clone(), &e("x"));
        let LpOutcome::Optimal { value, dual, .. } = &out else { panic!("{out:?}") };
        assert_eq!(*value, rat(5, 2));
        let lb = LbDual { bound: ObjValue::Finite(3.into()), combination: dual.clone() };
        lb.verify(&e("x"), &avail(&rows)).unwrap();
    }

    #[test]
    fn gomory_cut_on_knapsack_row() {
        let rows = vec![c("2*x + 2*y <= 5"), c("x >= 0"), c("y >= 0")];
        let (out, t) = solve_rows(rows.clone(), &e("-x - y"));
        assert!(out.is_optimal());
        let cuts = derive_gomory_cuts(t.as_ref().unwrap(), 4);
        assert!(!cuts.is_empty());
        let expected = c("-x - y >= -2");
        assert!(cuts.iter().any(|g| g.cut == expected));
        for g in &cuts {
            g.proof.verify_claim(&g.cut, &avail(&rows)).unwrap();
        }
    }

    #[test]
    fn gomory_cut_from_fractional_bound() {
        let rows = vec![c("2*x >= 1"), c("x <= 3")];
        let (_, t) = solve_rows(rows.clone(), &e("x"));
        let cuts = derive_gomory_cuts(t.as_ref().unwrap(), 4);
        assert_eq!(cuts.len(), 1);
        assert_eq!(cuts[0].cut, c("x >= 1"));
    }

    #[test]
    fn relaxation_includes_bounds() {
        let mut b = Bounds::new();
        b.set(VarId::new("x"), VarBounds::closed(-2, 7));
        let s = Subproblem::new(SubproblemId(0), [c("x >= 1")], []);
        let (out, _) = lp_solve(&s, &e("-x"), &b);
        let LpOutcome::Optimal { value, .. } = out else { panic!() };
        assert_eq!(value, rat(-7, 1));
    }
}
