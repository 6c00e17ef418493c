//! Depth-first branch-and-bound over LP relaxations.
//!
//! Relaxations are solved with `microlp`. Children are created by adding a
//! single bound row to a clone of the parent's optimal LP, which lets the
//! dual simplex warm-start from the parent basis.

use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome, Variable};

use crate::model::{Model, ObjSense, Sense};
use crate::solve::{Solution, SolveOptions, SolveStats, Status, CHECK_TOL};
use crate::IlpError;

const INT_TOL: f64 = 1e-6;

struct Node {
    lp: microlp::Solution,
    /// Relaxation objective in minimisation form.
    bound: f64,
}

enum LpResult {
    Solved(microlp::Solution),
    Infeasible,
}

fn lp_outcome(r: Result<SolveOutcome, microlp::Error>) -> Result<LpResult, IlpError> {
    match r {
        Ok(SolveOutcome::Solution(s)) => Ok(LpResult::Solved(s)),
        Ok(SolveOutcome::Interrupted(_)) => Err(IlpError::Backend("LP relaxation interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok(LpResult::Infeasible),
        Err(microlp::Error::Unbounded) => Err(IlpError::Unbounded),
        Err(e) => Err(IlpError::Backend(format!("LP relaxation failed: {e:?}"))),
    }
}

fn op(s: Sense) -> ComparisonOp {
    match s {
        Sense::Le => ComparisonOp::Le,
        Sense::Eq => ComparisonOp::Eq,
        Sense::Ge => ComparisonOp::Ge,
    }
}

/// Builds the continuous relaxation. `fixed` pins integral variables to the
/// given values (used to polish the continuous part of an integral point).
fn relaxation(model: &Model, sign: f64, fixed: Option<&[f64]>) -> Result<Option<(Problem, Vec<Variable>)>, IlpError> {
    let mut obj = vec![0.0; model.num_vars()];
    for &(v, c) in model.objective().expr.terms() {
        obj[v.index()] += sign * c;
    }
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(model.num_vars());
    for (i, v) in model.vars().iter().enumerate() {
        let (mut lo, mut hi) = (v.lower, v.upper);
        if v.kind.is_integral() {
            lo = (lo - INT_TOL).ceil();
            hi = (hi + INT_TOL).floor();
            if let Some(f) = fixed {
                lo = f[i].round();
                hi = lo;
            }
        }
        if lo > hi {
            return Ok(None);
        }
        vars.push(p.add_var(obj[i], (lo, hi)));
    }
    for c in model.constraints() {
        let terms: Vec<(Variable, f64)> = c
            .expr
            .terms()
            .iter()
            .filter(|t| t.1 != 0.0)
            .map(|&(v, k)| (vars[v.index()], k))
            .collect();
        if terms.is_empty() {
            let ok = match c.sense {
                Sense::Le => 0.0 <= c.rhs + CHECK_TOL,
                Sense::Ge => 0.0 >= c.rhs - CHECK_TOL,
                Sense::Eq => c.rhs.abs() <= CHECK_TOL,
            };
            if !ok {
                return Ok(None);
            }
            continue;
        }
        p.add_constraint(terms, op(c.sense), c.rhs);
    }
    Ok(Some((p, vars)))
}

fn values_of(lp: &microlp::Solution, vars: &[Variable]) -> Vec<f64> {
    vars.iter().map(|&v| lp.var_value_raw(v)).collect()
}

/// Picks the branching variable: highest priority, then most fractional.
fn pick_branch(model: &Model, x: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(i32, f64, usize)> = None;
    for (i, v) in model.vars().iter().enumerate() {
        if !v.kind.is_integral() {
            continue;
        }
        let frac = x[i] - x[i].floor();
        if frac <= INT_TOL || frac >= 1.0 - INT_TOL {
            continue;
        }
        let score = 0.5 - (frac - 0.5).abs();
        let better = match best {
            None => true,
            Some((p, s, _)) => v.priority > p || (v.priority == p && score > s + 1e-12),
        };
        if better {
            best = Some((v.priority, score, i));
        }
    }
    best.map(|(_, _, i)| (i, x[i]))
}

struct Search<'a> {
    model: &'a Model,
    sign: f64,
    integral_obj: bool,
    abs_gap: f64,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn incumbent_obj(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.0)
    }

    fn prunable(&self, bound: f64) -> bool {
        let inc = self.incumbent_obj();
        if !inc.is_finite() {
            return false;
        }
        if self.integral_obj {
            (bound - INT_TOL).ceil() >= inc - 0.5
        } else {
            bound >= inc - self.abs_gap.max(1e-9 * inc.abs().max(1.0))
        }
    }

    /// Accepts an LP point whose integral variables are all integral.
    fn offer(&mut self, x: &[f64]) -> Result<(), IlpError> {
        let mut cand: Vec<f64> = x
            .iter()
            .zip(self.model.vars())
            .map(|(&v, var)| if var.kind.is_integral() { v.round() } else { v })
            .collect();
        if self.model.check(&cand, CHECK_TOL).is_err() {
            // Re-solve the continuous part with the integers pinned.
            let Some((p, vars)) = relaxation(self.model, self.sign, Some(&cand))? else {
                return Ok(());
            };
            match lp_outcome(p.solve())? {
                LpResult::Solved(lp) => {
                    let polished = values_of(&lp, &vars);
                    for (c, (p, var)) in cand.iter_mut().zip(polished.iter().zip(self.model.vars())) {
                        if !var.kind.is_integral() {
                            *c = *p;
                        }
                    }
                }
                LpResult::Infeasible => return Ok(()),
            }
            if self.model.check(&cand, CHECK_TOL).is_err() {
                log::debug!("discarding numerically infeasible integral point");
                return Ok(());
            }
        }
        let obj = self.sign * self.model.objective_value(&cand);
        if obj < self.incumbent_obj() - 1e-12 {
            self.incumbent = Some((obj, cand));
        }
        Ok(())
    }
}

pub(crate) fn branch_and_bound(model: &Model, opts: &SolveOptions) -> Result<Solution, IlpError> {
    let start = Instant::now();
    let sign = match model.objective().sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    };
    let mut search = Search {
        model,
        sign,
        integral_obj: model.objective_is_integral(),
        abs_gap: opts.abs_gap,
        incumbent: None,
    };
    if let Some(init) = &opts.initial {
        match model.check(init, CHECK_TOL) {
            Ok(()) => search.incumbent = Some((sign * model.objective_value(init), init.clone())),
            Err(v) => log::warn!("ignoring infeasible starting assignment: {v}"),
        }
    }

    let mut stats = SolveStats::default();
    let finish = |search: Search, mut stats: SolveStats, open_bound: Option<f64>, hit_limit: bool| {
        stats.elapsed = start.elapsed();
        stats.hit_limit = hit_limit;
        let status;
        
        match search.incumbent {
            Some((obj, values)) => {
                status = if hit_limit { Status::Feasible } else { Status::Optimal };
                let bound = if hit_limit { open_bound.unwrap_or(obj).min(obj) } else { obj };
                stats.best_bound = Some(sign * bound);
                Solution { status, values, objective: sign * obj, stats }
            }
            None => {
                status = if hit_limit { Status::Timeout } else { Status::Infeasible };
                stats.best_bound = open_bound.map(|b| sign * b);
                Solution::without_assignment(status, stats)
            }
        }
    };

    let Some((problem, vars)) = relaxation(model, sign, None)? else {
        return Ok(finish(search, stats, None, false));
    };
    let root = match lp_outcome(problem.solve())? {
        LpResult::Solved(lp) => lp,
        LpResult::Infeasible => return Ok(finish(search, stats, None, false)),
    };
    let mut stack = vec![Node { bound: root.objective(), lp: root }];

    while let Some(node) = stack.pop() {
        let limit_hit = opts.time_limit.is_some_and(|t| start.elapsed() >= t)
            || opts.node_limit.is_some_and(|n| stats.nodes >= n);
        if limit_hit {
            let open = stack.iter().map(|n| n.bound).chain([node.bound]).fold(f64::INFINITY, f64::min);
            return Ok(finish(search, stats, Some(open), true));
        }
        stats.nodes += 1;
        if search.prunable(node.bound) {
            continue;
        }
        let x = values_of(&node.lp, &vars);
        let Some((bi, val)) = pick_branch(model, &x) else {
            search.offer(&x)?;
            continue;
        };
        let down = val.floor();
        let up = down + 1.0;
        let up_first = val - down >= 0.5;
        let mut children = Vec::with_capacity(2);
        for (cmp, rhs) in [(ComparisonOp::Le, down), (ComparisonOp::Ge, up)] {
            let child = node.lp.clone().add_constraint([(vars[bi], 1.0)], cmp, rhs);
            if let LpResult::Solved(lp) = lp_outcome(child)? {
                children.push(Node { bound: lp.objective(), lp });
            } else {
                children.push(Node { bound: f64::INFINITY, lp: node.lp.clone() });
            }
        }
        let (d, u) = {
            let mut it = children.into_iter();
            (it.next().unwrap(), it.next().unwrap())
        };
        // The child explored first is pushed last.
        let order = if up_first { [d, u] } else { [u, d] };
        for c in order {
            if c.bound.is_finite() && !search.prunable(c.bound) {
                stack.push(c);
            }
        }
    }
    Ok(finish(search, stats, None, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, VarKind};

    #[test]
    fn picks_highest_priority_first() {
        let mut m = Model::new("p");
        let a = m.add_var("a", VarKind::Integer, 0.0, 9.0).unwrap();
        let b = m.add_var("b", VarKind::Integer, 0.0, 9.0).unwrap();
        m.set_priority(b, 5);
        assert_eq!(pick_branch(&m, &[0.5, 0.1]).unwrap().0, b.index());
        m.set_priority(b, 0);
        assert_eq!(pick_branch(&m, &[0.5, 0.1]).unwrap().0, a.index());
        assert!(pick_branch(&m, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn empty_row_is_checked_directly() {
        let mut m = Model::new("e");
        m.add_var("x", VarKind::Continuous, 0.0, 1.0).unwrap();
        m.add_constraint("bad", LinExpr::new(), Sense::Ge, 1.0).unwrap();
        let s = branch_and_bound(&m, &SolveOptions::default()).unwrap();
        assert_eq!(s.status, Status::Infeasible);
    }
}
