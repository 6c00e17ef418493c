//! Assignment of the planned compressors to stages.
//!
//! The ILP has, per slice `(i, j)` (stage `i`, column `j`), the counts
//! `f`, `h`, the bits available `pp`, and a binary `y` that marks the slice
//! as used. `S` bounds the index of every used stage and is minimised.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ct_plan::{min_stage_bound, ColumnPlan};
use crate::ilp::{self, LinExpr, Model, ObjSense, Sense, SolveOptions, Status, VarId, VarKind};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMethod {
    Ilp,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageAssignment {
    /// Number of stages `S`.
    pub stages: usize,
    pub columns: usize,
    /// `f[i][j]`: 3:2 compressors of stage `i` in column `j`.
    pub f: Vec<Vec<usize>>,
    pub h: Vec<Vec<usize>>,
    /// `pp[i][j]`: bits entering stage `i` in column `j`; `pp[stages]` are
    /// the tree outputs.
    pub pp: Vec<Vec<usize>>,
    /// Stage limit of the model that produced this assignment.
    pub stage_max: usize,
    pub method: AssignMethod,
    /// True when the stage count is proven minimal.
    pub optimal: bool,
}

impl StageAssignment {
    pub fn passthrough(&self, i: usize, j: usize) -> usize {
        self.pp[i][j] - 3 * self.f[i][j] - 2 * self.h[i][j]
    }

    pub fn outputs(&self) -> &[usize] {
        &self.pp[self.stages]
    }

    pub fn total_full(&self) -> usize {
        self.f.iter().flatten().sum()
    }

    pub fn total_half(&self) -> usize {
        self.h.iter().flatten().sum()
    }

    /// Re-checks count conservation, slice capacity and the recurrence for
    /// `pp`, and that every column ends with at most two bits.
    pub fn validate(&self, plans: &[ColumnPlan]) -> Result<()> {
        let bad = |m: String| Err(Error::Consistency(m));
        if self.columns != plans.len() {
            return bad(format!("{} columns, plan has {}", self.columns, plans.len()));
        }
        if self.f.len() != self.stages || self.h.len() != self.stages || self.pp.len() != self.stages + 1 {
            return bad("stage grid has inconsistent dimensions".into());
        }
        for (j, p) in plans.iter().enumerate() {
            if self.pp[0][j] != p.pp {
                return bad(format!("column {j} starts with {} bits, expected {}", self.pp[0][j], p.pp));
            }
            let f: usize = (0..self.stages).map(|i| self.f[i][j]).sum();
            let h: usize = (0..self.stages).map(|i| self.h[i][j]).sum();
            if f != p.f || h != p.h {
                return bad(format!("column {j} uses ({f},{h}) compressors, planned ({},{})", p.f, p.h));
            }
        }
        for i in 0..self.stages {
            for j in 0..self.columns {
                let (f, h, pp) = (self.f[i][j], self.h[i][j], self.pp[i][j]);
                if 3 * f + 2 * h > pp {
                    return bad(format!("slice ({i},{j}) needs {} bits, has {pp}", 3 * f + 2 * h));
                }
                let carries = if j > 0 { self.f[i][j - 1] + self.h[i][j - 1] } else { 0 };
                if self.pp[i + 1][j] != pp - 2 * f - h + carries {
                    return bad(format!("bit count recurrence broken at ({i},{j})"));
                }
            }
        }
        if let Some(j) = self.outputs().iter().position(|&o| o > 2) {
            return bad(format!("column {j} ends with {} bits", self.outputs()[j]));
        }
        Ok(())
    }
}

/// Earliest-stage-first schedule: each stage places as many of the
/// remaining compressors of a column as the available bits allow.
pub fn greedy_assignment(plans: &[ColumnPlan]) -> Result<StageAssignment> {
    let n = plans.len();
    let mut rem_f: Vec<usize> = plans.iter().map(|p| p.f).collect();
    let mut rem_h: Vec<usize> = plans.iter().map(|p| p.h).collect();
    let mut pp = vec![plans.iter().map(|p| p.pp).collect::<Vec<_>>()];
    let (mut fs, mut hs) = (Vec::new(), Vec::new());
    let cap = 4 * n + 16;
    while rem_f.iter().chain(&rem_h).any(|&r| r > 0) {
        if fs.len() >= cap {
            return Err(Error::Consistency("greedy stage schedule did not converge".into()));
        }
        let cur = pp.last().unwrap().clone();
        let mut f = vec![0; n];
        let mut h = vec![0; n];
        for j in 0..n {
            let mut avail = cur[j];
            f[j] = rem_f[j].min(avail / 3);
            avail -= 3 * f[j];
            if rem_h[j] > 0 && avail >= 2 {
                h[j] = 1;
            }
            rem_f[j] -= f[j];
            rem_h[j] -= h[j];
        }
        let next = (0..n)
            .map(|j| cur[j] - 2 * f[j] - h[j] + if j > 0 { f[j - 1] + h[j - 1] } else { 0 })
            .collect();
        fs.push(f);
        hs.push(h);
        pp.push(next);
    }
    let a = StageAssignment {
        stages: fs.len(),
        columns: n,
        f: fs,
        h: hs,
        pp,
        stage_max: 0,
        method: AssignMethod::Greedy,
        optimal: false,
    };
    a.validate(plans)?;
    Ok(a)
}

/// Lower bound on the stage count from the tallest initial column.
pub fn stage_bound(plans: &[ColumnPlan]) -> usize {
    min_stage_bound(plans.iter().map(|p| p.pp).max().unwrap_or(0).max(1))
}

/// Variable handles of a built stage model. Stages are 1-based in variable
/// names and 0-based in these vectors; `None` marks columns that plan no
/// compressors (their counts are fixed at zero).
pub struct StageModel {
    pub model: Model,
    pub stage_max: usize,
    pub f: Vec<Vec<Option<VarId>>>,
    pub h: Vec<Vec<Option<VarId>>>,
    /// `pp[i][j]` for `i in 0..=stage_max`; stage 0 is fixed to the initial heights.
    pub pp: Vec<Vec<VarId>>,
    pub y: Vec<Vec<Option<VarId>>>,
    pub s: VarId,
}

pub fn build_stage_model(plans: &[ColumnPlan], stage_max: usize) -> Result<StageModel> {
    let bound = stage_bound(plans);
    if stage_max < bound {
        log::warn!("stage limit {stage_max} is below the lower bound {bound}; the model is infeasible");
    }
    let n = plans.len();
    let k = stage_max;
    let mut m = Model::new("stage_assignment");
    let s = m.add_var("S", VarKind::Integer, 0.0, k as f64)?;
    let mut f = vec![vec![None; n]; k];
    let mut h = vec![vec![None; n]; k];
    let mut y = vec![vec![None; n]; k];
    let mut pp = Vec::with_capacity(k + 1);
    let cap: Vec<f64> = (0..n).map(|j| (plans[j].pp + plans[j].carry_in) as f64).collect();
    for i in 0..=k {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let (lo, hi) = if i == 0 { (plans[j].pp as f64, plans[j].pp as f64) } else { (0.0, cap[j]) };
            row.push(m.add_var(format!("pp_{}_{j}", i + 1), VarKind::Integer, lo, hi)?);
        }
        pp.push(row);
    }
    for i in 0..k {
        for j in 0..n {
            let big_m = plans[j].f + plans[j].h;
            if big_m == 0 {
                continue;
            }
            let st = i + 1;
            if plans[j].f > 0 {
                f[i][j] = Some(m.add_var(format!("f_{st}_{j}"), VarKind::Integer, 0.0, plans[j].f as f64)?);
            }
            if plans[j].h > 0 {
                h[i][j] = Some(m.add_var(format!("h_{st}_{j}"), VarKind::Integer, 0.0, plans[j].h as f64)?);
            }
            let yv = m.add_binary(format!("y_{st}_{j}"))?;
            // Decide late stages first: fixing them to zero is what proves
            // a stage count is unreachable.
            m.set_priority(yv, st as i32);
            y[i][j] = Some(yv);
            // S >= i * y
            m.add_constraint(format!("stage_{st}_{j}"), LinExpr::new().term(s, 1.0).term(yv, -(st as f64)), Sense::Ge, 0.0)?;
            // M * y >= f + h
            let mut e = LinExpr::new().term(yv, big_m as f64);
            for v in [f[i][j], h[i][j]].into_iter().flatten() {
                e.add(v, -1.0);
            }
            m.add_constraint(format!("use_{st}_{j}"), e, Sense::Ge, 0.0)?;
            // 3f + 2h <= pp
            let mut e = LinExpr::new().term(pp[i][j], -1.0);
            if let Some(v) = f[i][j] {
                e.add(v, 3.0);
            }
            if let Some(v) = h[i][j] {
                e.add(v, 2.0);
            }
            m.add_constraint(format!("cap_{st}_{j}"), e, Sense::Le, 0.0)?;
        }
        for j in 0..n {
            // pp[i+1][j] = pp[i][j] - 2f[i][j] - h[i][j] + f[i][j-1] + h[i][j-1]
            let mut e = LinExpr::new().term(pp[i + 1][j], 1.0).term(pp[i][j], -1.0);
            if let Some(v) = f[i][j] {
                e.add(v, 2.0);
            }
            if let Some(v) = h[i][j] {
                e.add(v, 1.0);
            }
            if j > 0 {
                for v in [f[i][j - 1], h[i][j - 1]].into_iter().flatten() {
                    e.add(v, -1.0);
                }
            }
            m.add_constraint(format!("flow_{}_{j}", i + 1), e, Sense::Eq, 0.0)?;
        }
    }
    for j in 0..n {
        for (kind, total) in [("F", plans[j].f), ("H", plans[j].h)] {
            let vars: Vec<VarId> = (0..k).filter_map(|i| if kind == "F" { f[i][j] } else { h[i][j] }).collect();
            if total == 0 {
                continue;
            }
            let e: LinExpr = vars.iter().map(|&v| (v, 1.0)).collect();
            m.add_constraint(format!("count{kind}_{j}"), e, Sense::Eq, total as f64)?;
        }
        m.add_constraint(format!("final_{j}"), LinExpr::new().term(pp[k][j], 1.0), Sense::Le, 2.0)?;
    }
    m.set_objective(ObjSense::Minimize, LinExpr::new().term(s, 1.0))?;
    Ok(StageModel { model: m, stage_max: k, f, h, pp, y, s })
}

impl StageModel {
    /// Variable values reproducing `a` (which must fit in `stage_max`).
    pub fn encode(&self, a: &StageAssignment) -> Option<Vec<f64>> {
        if a.stages > self.stage_max {
            return None;
        }
        let mut x = vec![0.0; self.model.num_vars()];
        x[self.s.index()] = a.stages as f64;
        for i in 0..=self.stage_max {
            for j in 0..a.columns {
                x[self.pp[i][j].index()] = a.pp[i.min(a.stages)][j] as f64;
            }
        }
        for i in 0..a.stages {
            for j in 0..a.columns {
                let (f, h) = (a.f[i][j], a.h[i][j]);
                if let Some(v) = self.f[i][j] {
                    x[v.index()] = f as f64;
                }
                if let Some(v) = self.h[i][j] {
                    x[v.index()] = h as f64;
                }
                if let Some(v) = self.y[i][j] {
                    x[v.index()] = if f + h > 0 { 1.0 } else { 0.0 };
                }
            }
        }
        Some(x)
    }

    /// Objective preferring compressors in early stages.
    pub fn early_stage_objective(&self) -> LinExpr {
        let mut e = LinExpr::new();
        for i in 0..self.stage_max {
            for v in self.f[i].iter().chain(&self.h[i]).flatten() {
                e.add(*v, (i + 1) as f64);
            }
        }
        e
    }
}

/// Decodes a solution and re-validates it. Empty stages are dropped.
pub fn extract_assignment(sol: &ilp::Solution, sm: &StageModel, plans: &[ColumnPlan]) -> Result<StageAssignment> {
    if !sol.status.has_solution() {
        return Err(Error::NoIncumbent(format!("stage model status {}", sol.status.as_str())));
    }
    let n = plans.len();
    let val = |v: Option<VarId>| v.map_or(0, |v| sol.value(v).round().max(0.0) as usize);
    let (mut fs, mut hs) = (Vec::new(), Vec::new());
    for i in 0..sm.stage_max {
        let f: Vec<usize> = (0..n).map(|j| val(sm.f[i][j])).collect();
        let h: Vec<usize> = (0..n).map(|j| val(sm.h[i][j])).collect();
        if f.iter().chain(&h).any(|&c| c > 0) {
            fs.push(f);
            hs.push(h);
        }
    }
    let mut pp = vec![plans.iter().map(|p| p.pp).collect::<Vec<_>>()];
    for i in 0..fs.len() {
        let cur = &pp[i];
        let next = (0..n)
            .map(|j| {
                let carries = if j > 0 { fs[i][j - 1] + hs[i][j - 1] } else { 0 };
                (cur[j] + carries).checked_sub(2 * fs[i][j] + hs[i][j])
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Consistency("decoded stage grid consumes more bits than exist".into()))?;
        pp.push(next);
    }
    let a = StageAssignment {
        stages: fs.len(),
        columns: n,
        f: fs,
        h: hs,
        pp,
        stage_max: sm.stage_max,
        method: AssignMethod::Ilp,
        optimal: sol.status == Status::Optimal,
    };
    a.validate(plans)?;
    Ok(a)
}

#[derive(Clone, Debug)]
pub struct AssignOptions {
    pub method: AssignMethod,
    /// Stages allowed beyond the lower bound.
    pub stage_slack: usize,
    pub solve: SolveOptions,
    /// Node budget for the tie-break pass that pulls compressors into
    /// earlier stages. 0 disables it.
    pub tie_break_nodes: usize,
}

impl Default for AssignOptions {
    fn default() -> Self {
        AssignOptions {
            method: AssignMethod::Ilp,
            stage_slack: 2,
            solve: SolveOptions::default().with_time_limit(Duration::from_secs(3600)).with_node_limit(20_000),
            tie_break_nodes: 2_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignReport {
    pub bound: usize,
    pub greedy_stages: usize,
    pub status: String,
    pub nodes: usize,
    pub hit_limit: bool,
}

/// Stage assignment for `plans`, by ILP (seeded with the greedy schedule)
/// or by the greedy schedule alone.
pub fn assign(plans: &[ColumnPlan], opts: &AssignOptions) -> Result<(StageAssignment, AssignReport)> {
    let greedy = greedy_assignment(plans)?;
    let bound = stage_bound(plans);
    let mut report = AssignReport { bound, greedy_stages: greedy.stages, ..Default::default() };
    if opts.method == AssignMethod::Greedy {
        report.status = "greedy".into();
        let mut g = greedy;
        g.optimal = g.stages == bound;
        return Ok((g, report));
    }
    let stage_max = (bound + opts.stage_slack).max(greedy.stages);
    let mut sm = build_stage_model(plans, stage_max)?;
    let mut so = opts.solve.clone();
    so.initial = sm.encode(&greedy);
    let sol = ilp::solve(&sm.model, &so)?;
    report.nodes = sol.stats.nodes;
    report.hit_limit = sol.stats.hit_limit;
    report.status = sol.status.as_str().into();
    match sol.status {
        Status::Infeasible => return Err(Error::Infeasible("stage assignment".into())),
        Status::Timeout => return Err(Error::NoIncumbent("stage assignment".into())),
        _ => {}
    }
    let mut best = extract_assignment(&sol, &sm, plans)?;
    if opts.tie_break_nodes > 0 {
        // Second pass: keep S, prefer early stages.
        let s_best = best.stages as f64;
        sm.model.set_bounds(sm.s, 0.0, s_best);
        let obj = sm.early_stage_objective();
        sm.model.set_objective(ObjSense::Minimize, obj)?;
        let mut so2 = opts.solve.clone().with_node_limit(opts.tie_break_nodes);
        so2.initial = sm.encode(&best);
        match ilp::solve(&sm.model, &so2) {
            Ok(s2) if s2.status.has_solution() => {
                let mut second = extract_assignment(&s2, &sm, plans)?;
                second.optimal = best.optimal;
                if second.stages == best.stages {
                    best = second;
                }
            }
            Ok(s2) => log::warn!("tie-break pass ended with status {}", s2.status.as_str()),
            Err(e) => log::warn!("tie-break pass failed: {e}"),
        }
    }
    // The bound certifies optimality even when the search was cut short.
    best.optimal |= best.stages == bound;
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct_plan::plan_heights;

    #[test]
    fn single_column_of_three() {
        let plans = plan_heights(&[3]);
        let (a, _) = assign(&plans, &AssignOptions::default()).unwrap();
        assert_eq!(a.stages, 1);
        assert_eq!(a.h[0][0], 1);
        assert!(a.optimal);
    }

    #[test]
    fn greedy_matches_bound_on_triangles() {
        for w in [2usize, 3, 4, 8, 16] {
            let heights: Vec<usize> = (0..2 * w - 1).map(|j| (j + 1).min(2 * w - 1 - j)).collect();
            let plans = plan_heights(&heights);
            let g = greedy_assignment(&plans).unwrap();
            assert_eq!(g.stages, stage_bound(&plans), "width {w}");
        }
    }

    #[test]
    fn encode_round_trips_through_model_check() {
        let heights: Vec<usize> = (0..7).map(|j| (j + 1).min(7 - j)).collect();
        let plans = plan_heights(&heights);
        let g = greedy_assignment(&plans).unwrap();
        let sm = build_stage_model(&plans, g.stages + 1).unwrap();
        let x = sm.encode(&g).unwrap();
        sm.model.check(&x, 1e-9).unwrap();
    }
}
