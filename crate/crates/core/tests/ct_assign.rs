use std::time::{Duration, Instant};

use macgen::ct_assign::*;
use macgen::ct_plan::{plan_compressors, plan_heights, total_full};
use macgen::ilp::{self, parse_lp, write_lp, SolveOptions, Status};
use macgen::ppg::{generate_and_array, inject_accumulator};

fn opts() -> AssignOptions {
    AssignOptions {
        solve: SolveOptions::default().with_time_limit(Duration::from_secs(60)),
        ..AssignOptions::default()
    }
}

#[test]
fn ilp_reaches_stage_bound_for_multipliers() {
    for w in [4usize, 8, 16] {
        let plans = plan_compressors(&generate_and_array(w).unwrap());
        let t = Instant::now();
        let (a, rep) = assign(&plans, &opts()).unwrap();
        eprintln!("width {w}: S={} bound={} status={} nodes={} in {:?}", a.stages, rep.bound, rep.status, rep.nodes, t.elapsed());
        assert_eq!(a.stages, rep.bound, "width {w}");
        assert_eq!(rep.status, "optimal", "width {w}");
        assert!(a.optimal);
        a.validate(&plans).unwrap();
    }
}

#[test]
fn width_8_needs_four_stages() {
    let plans = plan_compressors(&generate_and_array(8).unwrap());
    assert_eq!(stage_bound(&plans), 4);
    let (a, _) = assign(&plans, &opts()).unwrap();
    assert_eq!(a.stages, 4);
    assert_eq!(a.total_full(), total_full(&plans));
}

#[test]
fn proven_optimal_without_greedy_seed() {
    // The model alone (no starting point) must still prove the bound.
    let plans = plan_compressors(&generate_and_array(4).unwrap());
    let sm = build_stage_model(&plans, stage_bound(&plans) + 2).unwrap();
    let sol = ilp::solve(&sm.model, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    let a = extract_assignment(&sol, &sm, &plans).unwrap();
    assert_eq!(a.stages, stage_bound(&plans));
    let f: usize = a.f.iter().flatten().sum();
    assert_eq!(f, total_full(&plans));
}

#[test]
fn stage_model_round_trips_through_lp_text() {
    let plans = plan_compressors(&generate_and_array(4).unwrap());
    let sm = build_stage_model(&plans, stage_bound(&plans) + 2).unwrap();
    let back = parse_lp(&write_lp(&sm.model)).unwrap();
    assert_eq!(back.num_vars(), sm.model.num_vars());
    assert_eq!(back.num_constraints(), sm.model.num_constraints());
}

#[test]
fn below_bound_is_infeasible() {
    let plans = plan_compressors(&generate_and_array(4).unwrap());
    let sm = build_stage_model(&plans, stage_bound(&plans) - 1).unwrap();
    let sol = ilp::solve(&sm.model, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
}

#[test]
fn forward_execution_ends_with_two_rows() {
    for (w, acc) in [(4usize, 8usize), (6, 0), (8, 16)] {
        let mut ppm = generate_and_array(w).unwrap();
        if acc > 0 {
            ppm = inject_accumulator(ppm, acc).unwrap();
        }
        let plans = plan_compressors(&ppm);
        let (a, _) = assign(&plans, &opts()).unwrap();
        // Execute the grid slice by slice from the initial heights.
        let mut cur: Vec<usize> = ppm.heights();
        cur.resize(plans.len(), 0);
        for i in 0..a.stages {
            let mut next = cur.clone();
            for j in 0..a.columns {
                assert!(3 * a.f[i][j] + 2 * a.h[i][j] <= cur[j]);
                next[j] -= 2 * a.f[i][j] + a.h[i][j];
                if j + 1 < a.columns {
                    next[j + 1] += a.f[i][j] + a.h[i][j];
                }
            }
            cur = next;
        }
        assert!(cur.iter().all(|&c| c <= 2), "width {w}: {cur:?}");
        assert_eq!(cur, a.outputs());
    }
}

#[test]
fn greedy_method_is_flagged() {
    let plans = plan_heights(&[1, 2, 3, 4, 3, 2, 1]);
    let o = AssignOptions { method: AssignMethod::Greedy, ..AssignOptions::default() };
    let (a, rep) = assign(&plans, &o).unwrap();
    assert_eq!(a.method, AssignMethod::Greedy);
    assert_eq!(rep.status, "greedy");
}
